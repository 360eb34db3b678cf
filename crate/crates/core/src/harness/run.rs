use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::report::{summarize, RunReport};
use super::{HarnessError, Scenario, ScenarioConfig};
use crate::automata::{next_accepting_run, select_accepting_run, AcceptingRun, SubTask, TraceMonitor};
use crate::barrier::{eps_margin, synthesize_control};
use crate::ekf::{BeliefState, EkfBank};
use crate::sde::{integrate_step, BeliefRecord, NoiseStream, QpStatus, StepDiagnostics, TrajectoryLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Satisfied,
    Violated,
    /// Reached the horizon without a decisive verdict.
    Horizon,
    /// Too many consecutive infeasible steps and no other run to try.
    InfeasibleAbort { step: usize },
    /// Plant or filter blew up; the log stops before the failing step.
    Diverged { step: usize, reason: String },
}

impl Termination {
    /// Process exit code for this outcome.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Satisfied | Termination::Horizon => 0,
            Termination::Violated => 2,
            Termination::InfeasibleAbort { .. } => 3,
            Termination::Diverged { .. } => 1,
        }
    }
}

/// Everything one seeded run produces; serialized as the JSON log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    /// Accepting runs in the order they were tried.
    pub runs: Vec<AcceptingRun>,
    pub termination: Termination,
    pub report: RunReport,
    pub log: TrajectoryLog,
}

/// Belief used for verdicts: the true state with the audit filter's
/// covariance.
pub fn audit_belief(state: &DVector<f64>, record: &BeliefRecord) -> BeliefState {
    BeliefState::new(state.clone(), record.covariance())
}

/// Next accepting run that shares `prefix` (the states already traversed)
/// and has not been tried.
fn alternative_run(scenario: &Scenario, tried: &[AcceptingRun], prefix: &[usize]) -> Result<Option<AcceptingRun>, HarnessError> {
    let mut exclude = tried.to_vec();
    while let Some(run) = next_accepting_run(&scenario.dra, &exclude)? {
        if run.loop_start >= prefix.len() && run.states.starts_with(prefix) {
            return Ok(Some(run));
        }
        exclude.push(run);
    }
    Ok(None)
}

/// Closed-loop run of `scenario` with plant noise drawn from `seed`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunRecord, HarnessError> {
    let dt = scenario.config.dt;
    let steps = scenario.num_steps();
    let m = scenario.num_patterns();
    let audit = scenario.audit_pattern;
    let model = &scenario.model;
    let p = model.input_dim();

    let mut runs = vec![select_accepting_run(&scenario.dra)?];
    let mut tasks: Vec<SubTask> = scenario.subtasks(&runs[0])?;
    let mut bank = EkfBank::with_window(
        model,
        &scenario.faults,
        scenario.initial_estimate.clone(),
        scenario.initial_covariance.clone(),
        scenario.config.innovation_window,
    )?;
    let mut margins = margin_table(scenario, &tasks)?;
    let mut noise = NoiseStream::new(seed);
    let mut x = scenario.initial_state.clone();

    let mut log = TrajectoryLog {
        dt,
        propositions: scenario.dra.propositions().to_vec(),
        ..Default::default()
    };
    let record_sample = |log: &mut TrajectoryLog, t: f64, x: &DVector<f64>, dy: DVector<f64>, bank: &EkfBank, j: usize, run: usize| {
        let beliefs: Vec<BeliefRecord> =
            (0..m).map(|i| BeliefRecord::new(&bank.belief(i).estimate, &bank.belief(i).covariance)).collect();
        let letter = scenario.labeler.label(&audit_belief(x, &beliefs[audit]));
        log.times.push(t);
        log.states.push(x.iter().copied().collect());
        log.outputs.push(dy.iter().copied().collect());
        log.beliefs.push(beliefs);
        log.subtask.push(j);
        log.labels.push(letter);
        log.run_index.push(run);
        letter
    };

    let mut j = 0;
    let letter = record_sample(&mut log, 0.0, &x, DVector::zeros(model.output_dim()), &bank, j, 0);
    let mut monitor = TraceMonitor::new(runs[0].clone(), &scenario.dra);
    let mut verdict = monitor.push(letter);
    // Patterns whose goal values gate advancing; `None` blocks it.
    let mut gate: Option<Vec<usize>> = Some((0..m).collect());
    let mut streak = 0;
    let mut termination = Termination::Horizon;

    for k in 0..steps {
        if let Some(v) = verdict {
            termination = if v.is_satisfied() { Termination::Satisfied } else { Termination::Violated };
            break;
        }
        if let Some(set) = &gate {
            while j < tasks.len()
                && !set.is_empty()
                && set.iter().all(|&i| tasks[j].goal.value(bank.belief(i)) - margins[j][i].1 >= 0.0)
            {
                j += 1;
            }
        }
        let task = &tasks[j.min(tasks.len() - 1)];
        let outcome = synthesize_control(&bank, task, &scenario.params)?;
        let u = outcome.input.clone().unwrap_or_else(|| DVector::zeros(p));
        gate = match outcome.status {
            QpStatus::Optimal => Some(outcome.active_after.clone()),
            QpStatus::Unconstrained => Some((0..m).collect()),
            QpStatus::Infeasible | QpStatus::NumericalFailure => None,
        };
        let diag = StepDiagnostics {
            subtask: task.index,
            active_before: outcome.active_before,
            after_isolation: outcome.after_isolation,
            active_after: outcome.active_after,
            qp_status: outcome.status,
            sfcbf: outcome.sfcbf,
            reach_row_active: outcome.reach_row_active,
            covariance_row_binding: outcome.covariance_row_binding,
        };

        let t = k as f64 * dt;
        let (x_next, dy) = match integrate_step(model, &x, &u, &scenario.attack, t, dt, &mut noise) {
            Ok(step) => step,
            Err(e) => {
                termination = Termination::Diverged { step: k, reason: e.to_string() };
                break;
            }
        };
        if let Err(e) = bank.step(&u, &dy, dt) {
            termination = Termination::Diverged { step: k, reason: e.to_string() };
            break;
        }
        x = x_next;
        log.inputs.push(u.iter().copied().collect());
        log.diagnostics.push(diag);

        streak = if gate.is_none() { streak + 1 } else { 0 };
        let mut run_idx = runs.len() - 1;
        let mut switched = false;
        let mut abort = false;
        if streak >= scenario.config.infeasible_patience {
            let current = &runs[run_idx];
            let prefix = &current.states[..=j.min(current.loop_start)];
            match alternative_run(scenario, &runs, prefix)? {
                Some(next) => {
                    tasks = scenario.subtasks(&next)?;
                    margins = margin_table(scenario, &tasks)?;
                    runs.push(next);
                    run_idx += 1;
                    streak = 0;
                    switched = true;
                }
                None => abort = true,
            }
        }
        let letter = record_sample(&mut log, (k + 1) as f64 * dt, &x, dy, &bank, j, run_idx);
        if switched {
            // Re-check the whole history against the new run.
            monitor = TraceMonitor::new(runs[run_idx].clone(), &scenario.dra);
            verdict = None;
            for &l in &log.labels {
                verdict = monitor.push(l);
                if verdict.is_some() {
                    break;
                }
            }
        } else {
            verdict = monitor.push(letter);
        }
        if abort && verdict.is_none() {
            termination = Termination::InfeasibleAbort { step: k };
            break;
        }
    }
    if let (Termination::Horizon, Some(v)) = (&termination, verdict) {
        termination = if v.is_satisfied() { Termination::Satisfied } else { Termination::Violated };
    }

    let report = summarize(scenario, &log, &runs)?;
    Ok(RunRecord { scenario: scenario.config.clone(), seed, runs, termination, report, log })
}

/// `(safety, goal)` margins per sub-task and pattern.
fn margin_table(scenario: &Scenario, tasks: &[SubTask]) -> Result<Vec<Vec<(f64, f64)>>, HarnessError> {
    tasks
        .iter()
        .map(|t| {
            scenario
                .params
                .eps
                .iter()
                .map(|&e| Ok((eps_margin(&t.safety, e)?.bar, eps_margin(&t.goal, e)?.bar)))
                .collect()
        })
        .collect()
}
