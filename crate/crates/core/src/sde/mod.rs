//! Stochastic control-affine plants with attacked observation channels.
//!
//! State follows `dx = (f(x) + g(x)u) dt + σ(t) dW` and the sensors report
//! increments `dy = (c x + a(t)) dt + ν(t) dV`, where the attack `a(t)` is
//! nonzero only on a fixed subset of rows.

mod attack;
mod log;
mod model;
mod noise;
mod wmr;

pub use attack::{AttackShape, AttackSignal, FaultPattern, FaultSet};
pub use log::{BeliefRecord, QpStatus, StepDiagnostics, TrajectoryLog};
pub use model::{
    Dynamics, FnDynamics, LinearDynamics, MeasurementHook, NoiseProfile, Observation,
    StackedDynamics, StackedMeasurement, SystemModel,
};
pub use noise::NoiseStream;
pub use wmr::{look_ahead_transform, wmr_plant, Unicycle, WmrMeasurement, WmrParams};

use nalgebra::DVector;
use thiserror::Error;

/// Default integration step in seconds.
pub const DEFAULT_DT: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("integration diverged at t = {time}")]
    Diverged { time: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// One Euler–Maruyama step of the plant and its sensors.
///
/// Returns the next state and the output increment over `[t, t + dt]`. The
/// noise stream always advances by `n + q` draws, whatever the noise
/// intensities, so paired runs stay aligned.
pub fn integrate_step(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    attack: &AttackSignal,
    t: f64,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<(DVector<f64>, DVector<f64>), SdeError> {
    if !(dt > 0.0) {
        return Err(SdeError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let n = model.state_dim();
    let q = model.output_dim();
    if x.len() != n || u.len() != model.input_dim() || attack.output_dim() != q {
        return Err(SdeError::Dimension(format!(
            "state {} / input {} / attack {} against model ({n}, {}, {q})",
            x.len(),
            u.len(),
            attack.output_dim(),
            model.input_dim()
        )));
    }
    let xi = noise.standard_normals(n);
    let eta = noise.standard_normals(q);
    let sqrt_dt = dt.sqrt();

    let drift = model.drift(x) + model.input_map(x) * u;
    let x_next = x + drift * dt + model.diffusion(t) * xi * sqrt_dt;

    let signal = model.measure(x) + attack.evaluate(t);
    let dy = signal * dt + model.measurement_noise(t) * eta * sqrt_dt;

    if !crate::linalg::all_finite_vec(&x_next) || !crate::linalg::all_finite_vec(&dy) {
        return Err(SdeError::Diverged { time: t + dt });
    }
    Ok((x_next, dy))
}
