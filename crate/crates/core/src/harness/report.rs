use serde::{Deserialize, Serialize};

use super::run::{audit_belief, RunRecord};
use super::{HarnessError, Scenario};
use crate::automata::{check_letters, AcceptingRun, SubTask, Verdict};
use crate::sde::{QpStatus, TrajectoryLog};

/// Patterns dropped at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationEvent {
    pub step: usize,
    /// Dropped by the divergence test.
    pub isolated: Vec<usize>,
    /// Dropped by residual pruning.
    pub pruned: Vec<usize>,
}

/// Summary of one run, computed from its log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub verdict: Verdict,
    /// Index of the accepting run the verdict refers to.
    pub run_index: usize,
    pub samples: usize,
    /// Time at which the controller left each sub-task.
    pub completion_times: Vec<Option<f64>>,
    /// Per sub-task, the minimum safety value at the audit belief.
    pub safety_min_true: Vec<Option<f64>>,
    /// Per sub-task and pattern, the minimum safety value at the belief.
    pub safety_min_belief: Vec<Vec<Option<f64>>>,
    /// `sup ‖x − x̂‖` of the audit pattern.
    pub max_estimation_error: f64,
    /// Largest covariance trace of the audit pattern.
    pub max_covariance_trace: f64,
    pub qp_optimal_count: usize,
    pub qp_infeasible_count: usize,
    pub isolation_events: Vec<IsolationEvent>,
    /// Smallest finite-time condition value over steps whose reach row was
    /// tight.
    pub min_sfcbf_reach_tight: Option<f64>,
}

fn fmin(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.min(v)))
}

/// Recomputes every report field from `log`.
pub fn summarize(scenario: &Scenario, log: &TrajectoryLog, runs: &[AcceptingRun]) -> Result<RunReport, HarnessError> {
    log.validate().map_err(HarnessError::Verify)?;
    let audit = scenario.audit_pattern;
    let m = log.num_patterns();
    let run_index = log.run_index.last().copied().unwrap_or(0);
    let run = runs.get(run_index).ok_or_else(|| HarnessError::Verify(format!("run {run_index} is not recorded")))?;
    let verdict = check_letters(&log.labels, run, &scenario.dra);

    let mut task_sets: Vec<Option<Vec<SubTask>>> = vec![None; runs.len()];
    let num_tasks = run.loop_start.max(1);
    let mut completion_times = vec![None; num_tasks];
    let mut safety_min_true = vec![None; num_tasks];
    let mut safety_min_belief = vec![vec![None; m]; num_tasks];
    let mut max_err: f64 = 0.0;
    let mut max_tr: f64 = 0.0;

    for k in 0..log.len() {
        let r = log.run_index.get(k).copied().unwrap_or(0);
        if task_sets[r].is_none() {
            task_sets[r] = Some(scenario.subtasks(&runs[r])?);
        }
        let tasks = task_sets[r].as_ref().expect("filled above");
        let j = log.subtask[k];
        for (done, slot) in completion_times.iter_mut().enumerate().take(j.min(num_tasks)) {
            if slot.is_none() && done < j {
                *slot = Some(log.times[k]);
            }
        }
        if tasks.is_empty() {
            continue;
        }
        let seg = j.min(tasks.len() - 1);
        let x = log.state(k);
        let audit_record = &log.beliefs[k][audit];
        let b = audit_belief(&x, audit_record);
        if seg < num_tasks {
            safety_min_true[seg] = fmin(safety_min_true[seg], tasks[seg].safety.value(&b));
            for i in 0..m {
                let bi = crate::ekf::BeliefState::new(log.beliefs[k][i].estimate(), log.beliefs[k][i].covariance());
                safety_min_belief[seg][i] = fmin(safety_min_belief[seg][i], tasks[seg].safety.value(&bi));
            }
        }
        max_err = max_err.max((&x - audit_record.estimate()).norm());
        max_tr = max_tr.max(audit_record.covariance_trace());
    }

    let mut isolation_events = Vec::new();
    let mut qp_optimal_count = 0;
    let mut qp_infeasible_count = 0;
    let mut min_sfcbf = None;
    for (k, d) in log.diagnostics.iter().enumerate() {
        match d.qp_status {
            QpStatus::Optimal => qp_optimal_count += 1,
            QpStatus::Infeasible | QpStatus::NumericalFailure => qp_infeasible_count += 1,
            QpStatus::Unconstrained => {}
        }
        let isolated: Vec<usize> = d.active_before.iter().copied().filter(|i| !d.after_isolation.contains(i)).collect();
        let pruned: Vec<usize> = d.after_isolation.iter().copied().filter(|i| !d.active_after.contains(i)).collect();
        if !isolated.is_empty() || !pruned.is_empty() {
            isolation_events.push(IsolationEvent { step: k, isolated, pruned });
        }
        for (i, tight) in &d.reach_row_active {
            if *tight {
                if let Some((_, v)) = d.sfcbf.iter().find(|(p, _)| p == i) {
                    min_sfcbf = fmin(min_sfcbf, *v);
                }
            }
        }
    }

    Ok(RunReport {
        verdict,
        run_index,
        samples: log.len(),
        completion_times,
        safety_min_true,
        safety_min_belief,
        max_estimation_error: max_err,
        max_covariance_trace: max_tr,
        qp_optimal_count,
        qp_infeasible_count,
        isolation_events,
        min_sfcbf_reach_tight: min_sfcbf,
    })
}

/// Offline re-audit of a stored run: labels are recomputed from the logged
/// states and covariances, the runs are checked against the automaton, and
/// the report is rebuilt. Any disagreement with the stored record is an
/// error.
pub fn verify(record: &RunRecord, scenario: &Scenario) -> Result<RunReport, HarnessError> {
    let log = &record.log;
    log.validate().map_err(HarnessError::Verify)?;
    if log.propositions != scenario.dra.propositions() {
        return Err(HarnessError::Verify("log propositions differ from the scenario automaton".into()));
    }
    if log.num_patterns() <= scenario.audit_pattern {
        return Err(HarnessError::Verify("log has fewer patterns than the scenario".into()));
    }
    match record.runs.first() {
        Some(first) if *first == crate::automata::select_accepting_run(&scenario.dra)? => {}
        _ => return Err(HarnessError::Verify("first recorded run is not the selected accepting run".into())),
    }
    if let Some(bad) = record.runs.iter().position(|r| !r.is_valid(&scenario.dra)) {
        return Err(HarnessError::Verify(format!("recorded run {bad} is not an accepting lasso")));
    }
    for k in 0..log.len() {
        let b = audit_belief(&log.state(k), &log.beliefs[k][scenario.audit_pattern]);
        let expected = scenario.labeler.label(&b);
        if expected != log.labels[k] {
            return Err(HarnessError::Verify(format!(
                "label mismatch at step {k}: logged {:?}, recomputed {:?}",
                log.label_names(log.labels[k]),
                log.label_names(expected)
            )));
        }
    }
    if log.subtask.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::Verify("sub-task index decreases".into()));
    }
    let report = summarize(scenario, log, &record.runs)?;
    if let Some(v) = report.min_sfcbf_reach_tight {
        if v < -scenario.params.tol.max(1e-6) {
            return Err(HarnessError::Verify(format!("finite-time condition violated on a tight reach row: {v}")));
        }
    }
    if report != record.report {
        return Err(HarnessError::Verify("recomputed report differs from the stored one".into()));
    }
    Ok(report)
}
