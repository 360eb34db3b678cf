//! Small dense quadratic programs `min uᵀMu  s.t.  Au ≥ b`.

mod active_set;
mod simplex;

pub use active_set::solve;
pub use simplex::{feasibility, Feasibility};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on residuals and activity decisions.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Rows with a normal shorter than this are treated as constants.
pub(crate) const DEGENERATE_ROW: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("no convergence after {iterations} iterations")]
    MaxIterations { iterations: usize, last: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub cost: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn new(cost: DMatrix<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QpError> {
        let p = cost.nrows();
        if cost.ncols() != p {
            return Err(QpError::InvalidProblem(format!("cost is {:?}", cost.shape())));
        }
        if a.ncols() != p || a.nrows() != b.len() {
            return Err(QpError::InvalidProblem(format!(
                "A is {:?} and b has {} entries for {p} inputs",
                a.shape(),
                b.len()
            )));
        }
        if cost.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::InvalidProblem("non-finite entry".into()));
        }
        if (&cost - cost.transpose()).amax() > 1e-12 * cost.amax().max(1.0) {
            return Err(QpError::InvalidProblem("cost matrix is not symmetric".into()));
        }
        if cost.clone().cholesky().is_none() {
            return Err(QpError::InvalidProblem("cost matrix is not positive definite".into()));
        }
        Ok(Self { cost, a, b })
    }

    /// Problem with no constraints over `p` inputs.
    pub fn unconstrained(cost: DMatrix<f64>) -> Result<Self, QpError> {
        let p = cost.nrows();
        Self::new(cost, DMatrix::zeros(0, p), DVector::zeros(0))
    }

    pub fn num_inputs(&self) -> usize {
        self.cost.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.cost * u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: SolveStatus,
    /// Minimiser when optimal, last iterate otherwise.
    pub u: DVector<f64>,
    /// Indices of constraints held with equality.
    pub active: Vec<usize>,
    /// One multiplier per constraint, zero off the active set.
    pub multipliers: DVector<f64>,
    /// When infeasible: `λ ≥ 0` with `Aᵀλ = 0` and `λᵀb > 0`.
    pub certificate: Option<DVector<f64>>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `‖2Mu − Aᵀλ‖∞`.
    pub fn stationarity_residual(&self, p: &QpProblem) -> f64 {
        (2.0 * &p.cost * &self.u - p.a.transpose() * &self.multipliers).amax()
    }

    /// `max(0, max_j (b − Au)_j)`.
    pub fn primal_violation(&self, p: &QpProblem) -> f64 {
        (&p.b - &p.a * &self.u).iter().fold(0.0_f64, |acc, v| acc.max(*v))
    }

    /// `max_j |λ_j (Au − b)_j|`.
    pub fn complementarity_residual(&self, p: &QpProblem) -> f64 {
        let slack = &p.a * &self.u - &p.b;
        slack.component_mul(&self.multipliers).amax()
    }
}

/// Checks `λ ≥ −tol`, `‖Aᵀλ‖∞ ≤ tol` and `λᵀb > tol` after scaling `λ` to
/// unit sum.
pub fn is_farkas_certificate(a: &DMatrix<f64>, b: &DVector<f64>, lambda: &DVector<f64>, tol: f64) -> bool {
    let total: f64 = lambda.sum();
    if !(total > 0.0) || lambda.len() != b.len() {
        return false;
    }
    let y = lambda / total;
    y.iter().all(|v| *v >= -tol) && (a.transpose() * &y).amax() <= tol * a.amax().max(1.0) && y.dot(b) > tol
}
