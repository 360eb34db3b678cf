use nalgebra::{DMatrix, DVector};

use super::{barrier_rows, eps_margin, sfcbf_value, BarrierError, BeliefDynamics, ConstraintKind, LinearConstraint};
use crate::automata::SubTask;
use crate::ekf::EkfBank;
use crate::qp::{self, QpProblem, SolveStatus};
use crate::sde::QpStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisParams {
    /// Estimation-error radius per pattern.
    pub eps: Vec<f64>,
    /// Symmetric pairwise divergence thresholds.
    pub theta: DMatrix<f64>,
    /// A pattern is active while its shifted safety value is below this...
    pub rho_safety: f64,
    /// ...and its shifted goal value is below this.
    pub rho_reach: f64,
    /// Input cost `M`.
    pub cost: DMatrix<f64>,
    pub tol: f64,
}

impl SynthesisParams {
    /// Uniform parameters for `m` patterns and `p` inputs.
    pub fn uniform(m: usize, p: usize, eps: f64, theta: f64, rho_safety: f64, rho_reach: f64) -> Self {
        Self {
            eps: vec![eps; m],
            theta: DMatrix::from_element(m, m, theta),
            rho_safety,
            rho_reach,
            cost: DMatrix::identity(p, p),
            tol: qp::DEFAULT_TOL,
        }
    }

    pub fn validate(&self, m: usize, p: usize) -> Result<(), BarrierError> {
        let bad = |msg: String| Err(BarrierError::InvalidParams(msg));
        if self.eps.len() != m {
            return bad(format!("{} error radii for {m} patterns", self.eps.len()));
        }
        if self.eps.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return bad("error radii must be finite and nonnegative".into());
        }
        if self.theta.shape() != (m, m) || self.theta.iter().any(|t| !(*t > 0.0)) {
            return bad("divergence thresholds must form a positive m×m matrix".into());
        }
        if self.theta != self.theta.transpose() {
            return bad("divergence thresholds must be symmetric".into());
        }
        if !(self.rho_safety > 0.0) || !(self.rho_reach > 0.0) {
            return bad("activation thresholds must be positive".into());
        }
        if self.cost.shape() != (p, p) || self.cost != self.cost.transpose() || self.cost.clone().cholesky().is_none() {
            return bad("input cost must be symmetric positive definite".into());
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub status: QpStatus,
    /// The input, absent when infeasible.
    pub input: Option<DVector<f64>>,
    pub active_before: Vec<usize>,
    pub after_isolation: Vec<usize>,
    pub active_after: Vec<usize>,
    /// Rows of every initially active pattern.
    pub rows: Vec<LinearConstraint>,
    pub sfcbf: Vec<(usize, f64)>,
    pub reach_row_active: Vec<(usize, bool)>,
    pub covariance_row_binding: bool,
}

/// Patterns whose shifted safety value is below `ρ₁` and shifted goal value
/// below `ρ₂`.
pub fn active_set(bank: &EkfBank, subtask: &SubTask, params: &SynthesisParams) -> Result<Vec<usize>, BarrierError> {
    let mut out = Vec::new();
    for i in 0..bank.num_patterns() {
        let b = bank.belief(i);
        let h_hat = eps_margin(&subtask.safety, params.eps[i])?.shifted(subtask.safety.value(b));
        let d_hat = eps_margin(&subtask.goal, params.eps[i])?.shifted(subtask.goal.value(b));
        if h_hat < params.rho_safety && d_hat < params.rho_reach {
            out.push(i);
        }
    }
    Ok(out)
}

/// Drops every pattern that disagrees with some other pattern by more than
/// the threshold and with the filter ignoring both by more than half of it.
/// Nothing is dropped when `active` is already feasible.
pub fn isolate_faults(
    bank: &EkfBank,
    active: &[usize],
    theta: &DMatrix<f64>,
    is_feasible: impl Fn(&[usize]) -> bool,
) -> Vec<usize> {
    if active.is_empty() || is_feasible(active) {
        return active.to_vec();
    }
    let m = bank.num_patterns();
    active
        .iter()
        .copied()
        .filter(|&i| {
            !(0..m).any(|k| {
                k != i && bank.divergence(i, k) > theta[(i, k)] && bank.leaveout_divergence(i, k) > theta[(i, k)] / 2.0
            })
        })
        .collect()
}

/// Removes the pattern with the largest windowed innovation (lowest index on
/// ties) until the rest is feasible or nothing is left.
pub fn residual_prune(bank: &EkfBank, active: &[usize], is_feasible: impl Fn(&[usize]) -> bool) -> Vec<usize> {
    let mut set = active.to_vec();
    while !set.is_empty() && !is_feasible(&set) {
        let mut worst = 0;
        for idx in 1..set.len() {
            if bank.windowed_innovation(set[idx]) > bank.windowed_innovation(set[worst]) {
                worst = idx;
            }
        }
        set.remove(worst);
    }
    set
}

fn stack(rows: &[LinearConstraint], patterns: &[usize], p: usize) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let picked: Vec<usize> = (0..rows.len()).filter(|&r| patterns.contains(&rows[r].pattern)).collect();
    let a = DMatrix::from_fn(picked.len(), p, |r, c| rows[picked[r]].normal[c]);
    let b = DVector::from_fn(picked.len(), |r, _| rows[picked[r]].offset);
    (a, b, picked)
}

/// One synthesis step: activation, fault isolation, residual pruning and
/// the minimum-cost input over the surviving patterns' rows.
pub fn synthesize_control(
    bank: &EkfBank,
    subtask: &SubTask,
    params: &SynthesisParams,
) -> Result<SynthesisOutcome, BarrierError> {
    let p = params.cost.nrows();
    let active_before = active_set(bank, subtask, params)?;
    if active_before.is_empty() {
        return Ok(SynthesisOutcome {
            status: QpStatus::Unconstrained,
            input: Some(DVector::zeros(p)),
            active_before,
            after_isolation: Vec::new(),
            active_after: Vec::new(),
            rows: Vec::new(),
            sfcbf: Vec::new(),
            reach_row_active: Vec::new(),
            covariance_row_binding: false,
        });
    }

    let dynamics: Vec<BeliefDynamics<'_>> =
        (0..bank.num_patterns()).map(|i| BeliefDynamics::new(bank.filter(i), params.eps[i])).collect();
    let mut rows = Vec::new();
    for &i in &active_before {
        rows.extend(barrier_rows(&dynamics[i], &subtask.safety, ConstraintKind::Safety, i, subtask.index)?);
        rows.extend(barrier_rows(&dynamics[i], &subtask.goal, ConstraintKind::Reach, i, subtask.index)?);
    }
    let feasible = |set: &[usize]| {
        let (a, b, _) = stack(&rows, set, p);
        qp::feasibility(&a, &b, params.tol).is_feasible()
    };
    let after_isolation = isolate_faults(bank, &active_before, &params.theta, feasible);
    let active_after = residual_prune(bank, &after_isolation, feasible);

    let mut outcome = SynthesisOutcome {
        status: QpStatus::Infeasible,
        input: None,
        active_before,
        after_isolation,
        active_after,
        rows,
        sfcbf: Vec::new(),
        reach_row_active: Vec::new(),
        covariance_row_binding: false,
    };
    if outcome.active_after.is_empty() {
        return Ok(outcome);
    }
    let (a, b, picked) = stack(&outcome.rows, &outcome.active_after, p);
    let problem = QpProblem::new(params.cost.clone(), a, b)
        .map_err(|e| BarrierError::InvalidParams(e.to_string()))?;
    let solution = match qp::solve(&problem, params.tol) {
        Ok(s) => s,
        Err(_) => {
            outcome.status = QpStatus::NumericalFailure;
            return Ok(outcome);
        }
    };
    if solution.status == SolveStatus::Infeasible {
        return Ok(outcome);
    }
    let u = solution.u.clone();
    for &i in &outcome.active_after {
        outcome.sfcbf.push((i, sfcbf_value(&subtask.goal, &dynamics[i], &u)?));
        let reach_tight = solution.active.iter().any(|&r| {
            let row = &outcome.rows[picked[r]];
            row.pattern == i && row.kind == ConstraintKind::Reach
        });
        outcome.reach_row_active.push((i, reach_tight));
    }
    outcome.covariance_row_binding = solution.active.iter().any(|&r| outcome.rows[picked[r]].covariance);
    outcome.status = QpStatus::Optimal;
    outcome.input = Some(u);
    Ok(outcome)
}
