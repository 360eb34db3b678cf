//! Wheeled mobile robot with a look-ahead sensor package.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use super::model::{Dynamics, MeasurementHook, NoiseProfile, Observation, SystemModel};
use super::SdeError;

/// Number of sensor rows per robot.
pub const WMR_OUTPUTS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmrParams {
    /// Distance from the axle to the look-ahead point.
    pub offset: f64,
    /// Process noise intensity on (p1, p2, θ).
    pub process_noise: [f64; 3],
    /// Sensor noise intensity per row.
    pub sensor_noise: [f64; WMR_OUTPUTS],
}

impl Default for WmrParams {
    fn default() -> Self {
        Self { offset: 0.5, process_noise: [0.03, 0.03, 0.01], sensor_noise: [0.1; WMR_OUTPUTS] }
    }
}

/// Unicycle `ṗ = v (cos θ, sin θ)`, `θ̇ = ω` with state `(p1, p2, θ)` and
/// input `(v, ω)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl Dynamics for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = x[2].sin_cos();
        DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0])
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }
    fn input_map_jacobians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (s, c) = x[2].sin_cos();
        let mut dv = DMatrix::zeros(3, 3);
        dv[(0, 2)] = -s;
        dv[(1, 2)] = c;
        vec![dv, DMatrix::zeros(3, 3)]
    }
}

/// Rows: p1, p1, p2, p2, look-ahead x, look-ahead y, θ.
#[derive(Debug, Clone, Copy)]
pub struct WmrMeasurement {
    pub offset: f64,
}

impl MeasurementHook for WmrMeasurement {
    fn state_dim(&self) -> usize {
        3
    }
    fn output_dim(&self) -> usize {
        WMR_OUTPUTS
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let (s, c) = x[2].sin_cos();
        let d = self.offset;
        DVector::from_column_slice(&[x[0], x[0], x[1], x[1], x[0] + d * c, x[1] + d * s, x[2]])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = x[2].sin_cos();
        let d = self.offset;
        #[rustfmt::skip]
        let rows = [
            1.0, 0.0, 0.0,
            1.0, 0.0, 0.0,
            0.0, 1.0, 0.0,
            0.0, 1.0, 0.0,
            1.0, 0.0, -d * s,
            0.0, 1.0, d * c,
            0.0, 0.0, 1.0,
        ];
        DMatrix::from_row_slice(WMR_OUTPUTS, 3, &rows)
    }
}

/// Map from `(v, ω)` to the velocity of the look-ahead point.
pub fn look_ahead_transform(theta: f64, offset: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -offset * s, s, offset * c)
}

pub fn wmr_plant(params: &WmrParams) -> Result<SystemModel, SdeError> {
    if !(params.offset > 0.0) || !params.offset.is_finite() {
        return Err(SdeError::InvalidParameter(format!("look-ahead offset must be positive, got {}", params.offset)));
    }
    if params.process_noise.iter().chain(params.sensor_noise.iter()).any(|v| !v.is_finite()) {
        return Err(SdeError::InvalidParameter("noise levels must be finite".into()));
    }
    SystemModel::new(
        Arc::new(Unicycle),
        NoiseProfile::diagonal(&params.process_noise),
        Observation::Hook(Arc::new(WmrMeasurement { offset: params.offset })),
        NoiseProfile::diagonal(&params.sensor_noise),
    )
}
