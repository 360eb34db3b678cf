//! Extended Kalman filters that ignore the rows of one fault pattern each.

mod bank;
mod instance;

pub use bank::EkfBank;
pub use instance::{ekf_init, EkfInstance};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default length of the innovation averaging window, in steps.
pub const DEFAULT_INNOVATION_WINDOW: usize = 50;

/// Eigenvalues of `P` below minus this are clipped to zero.
pub const PSD_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("pattern {pattern} removes every sensor row")]
    UnobservablePattern { pattern: String },
    #[error("measurement noise covariance of pattern {pattern} is singular")]
    NoiseDegenerate { pattern: String },
    #[error("filter for pattern {pattern} diverged at t = {time}")]
    Diverged { pattern: String, time: f64 },
    #[error("invalid initial covariance: {0}")]
    InvalidCovariance(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("filter for removed rows {pattern} failed: {source}")]
    Instance { pattern: String, source: Box<EkfError> },
}

/// Estimate `x̂` and error covariance `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub estimate: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl BeliefState {
    pub fn new(estimate: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { estimate, covariance }
    }

    /// Point belief with zero covariance.
    pub fn certain(estimate: DVector<f64>) -> Self {
        let n = estimate.len();
        Self { estimate, covariance: DMatrix::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.estimate.len()
    }
}
