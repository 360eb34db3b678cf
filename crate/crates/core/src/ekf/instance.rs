use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{BeliefState, EkfError, DEFAULT_INNOVATION_WINDOW, PSD_FLOOR};
use crate::linalg::{all_finite_mat, all_finite_vec, clip_psd, min_eigenvalue, select_block, select_entries, select_rows, symmetrize};
use crate::sde::{FaultPattern, SystemModel};

/// Continuous-discrete EKF over the sensor rows not in `removed`.
#[derive(Debug, Clone)]
pub struct EkfInstance {
    model: SystemModel,
    removed: FaultPattern,
    retained: Vec<usize>,
    belief: BeliefState,
    time: f64,
    /// `ν_i` and `R_i⁻¹`, cached once when the sensor noise is constant.
    noise_cache: Option<(DMatrix<f64>, DMatrix<f64>)>,
    jacobian: DMatrix<f64>,
    gain: DMatrix<f64>,
    window: VecDeque<DVector<f64>>,
    window_sum: DVector<f64>,
    window_len: usize,
}

/// Filter at `t = 0` that discards the rows of `pattern`.
pub fn ekf_init(
    model: &SystemModel,
    pattern: &FaultPattern,
    estimate: DVector<f64>,
    covariance: DMatrix<f64>,
) -> Result<EkfInstance, EkfError> {
    EkfInstance::new(model, pattern, estimate, covariance, DEFAULT_INNOVATION_WINDOW)
}

impl EkfInstance {
    pub fn new(
        model: &SystemModel,
        pattern: &FaultPattern,
        estimate: DVector<f64>,
        mut covariance: DMatrix<f64>,
        window_len: usize,
    ) -> Result<Self, EkfError> {
        let n = model.state_dim();
        let q = model.output_dim();
        if estimate.len() != n || covariance.shape() != (n, n) {
            return Err(EkfError::Dimension(format!(
                "estimate {} / covariance {:?} for state dimension {n}",
                estimate.len(),
                covariance.shape()
            )));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 * covariance.amax().max(1.0) {
            return Err(EkfError::InvalidCovariance("not symmetric".into()));
        }
        if min_eigenvalue(&covariance) < -PSD_FLOOR {
            return Err(EkfError::InvalidCovariance("not positive semidefinite".into()));
        }
        symmetrize(&mut covariance);
        if pattern.rows().iter().any(|&r| r >= q) {
            return Err(EkfError::Dimension(format!("pattern {pattern} exceeds {q} outputs")));
        }
        let retained = pattern.retained(q);
        if retained.is_empty() {
            return Err(EkfError::UnobservablePattern { pattern: pattern.to_string() });
        }
        let noise_cache = if model.measurement_noise_profile().is_constant() {
            Some(reduced_noise(model, &retained, 0.0, pattern)?)
        } else {
            None
        };
        let mut ekf = Self {
            model: model.clone(),
            removed: pattern.clone(),
            retained: retained.clone(),
            belief: BeliefState::new(estimate, covariance),
            time: 0.0,
            noise_cache,
            jacobian: DMatrix::zeros(retained.len(), n),
            gain: DMatrix::zeros(n, retained.len()),
            window: VecDeque::with_capacity(window_len.max(1)),
            window_sum: DVector::zeros(retained.len()),
            window_len: window_len.max(1),
        };
        ekf.refresh_gain()?;
        Ok(ekf)
    }

    pub fn pattern(&self) -> &FaultPattern {
        &self.removed
    }
    pub fn retained_rows(&self) -> &[usize] {
        &self.retained
    }
    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }
    pub fn estimate(&self) -> &DVector<f64> {
        &self.belief.estimate
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.belief.covariance
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn model(&self) -> &SystemModel {
        &self.model
    }
    /// `K = P Hᵢᵀ Rᵢ⁻¹` at the current belief.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
    /// Reduced measurement Jacobian `Hᵢ` at the current estimate.
    pub fn observation_jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }
    /// `νᵢ`, the sensor noise intensity with removed rows and columns deleted.
    pub fn reduced_noise(&self) -> DMatrix<f64> {
        match &self.noise_cache {
            Some((nu, _)) => nu.clone(),
            None => select_block(&self.model.measurement_noise(self.time), &self.retained),
        }
    }

    /// Reduced observation `hᵢ(x̂)`.
    pub fn predicted_output(&self) -> DVector<f64> {
        select_entries(&self.model.measure(&self.belief.estimate), &self.retained)
    }

    /// Innovation rate `dyᵢ/dt − hᵢ(x̂)` for a full-length increment `dy`.
    pub fn innovation_vector(&self, dy: &DVector<f64>, dt: f64) -> DVector<f64> {
        select_entries(dy, &self.retained) / dt - self.predicted_output()
    }

    /// Euclidean norm of the innovation rate.
    pub fn innovation(&self, dy: &DVector<f64>, dt: f64) -> f64 {
        self.innovation_vector(dy, dt).norm()
    }

    /// Norm of the innovation rate averaged over the last window of steps.
    pub fn windowed_innovation(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        (&self.window_sum / self.window.len() as f64).norm()
    }

    /// One Euler step of the filter equations over `[t, t + dt]`.
    pub fn step(&mut self, u: &DVector<f64>, dy: &DVector<f64>, dt: f64) -> Result<(), EkfError> {
        if !(dt > 0.0) {
            return Err(EkfError::Dimension(format!("dt must be positive, got {dt}")));
        }
        if dy.len() != self.model.output_dim() || u.len() != self.model.input_dim() {
            return Err(EkfError::Dimension(format!(
                "dy has {} rows and u {} entries, model has {} outputs and {} inputs",
                dy.len(),
                u.len(),
                self.model.output_dim(),
                self.model.input_dim()
            )));
        }
        let x = &self.belief.estimate;
        let p = &self.belief.covariance;
        let innovation = self.innovation_vector(dy, dt);

        let drift = self.model.drift(x) + self.model.input_map(x) * u;
        let x_next = x + drift * dt + &self.gain * &innovation * dt;

        let a = self.model.closed_loop_jacobian(x, u);
        let ap = &a * p;
        let correction = &self.gain * &self.jacobian * p;
        let mut p_next = p + (&ap + ap.transpose() + self.model.process_covariance(self.time) - correction) * dt;
        symmetrize(&mut p_next);
        clip_psd(&mut p_next, PSD_FLOOR);

        let time = self.time + dt;
        if !all_finite_vec(&x_next) || !all_finite_mat(&p_next) {
            return Err(EkfError::Diverged { pattern: self.removed.to_string(), time });
        }
        self.belief.estimate = x_next;
        self.belief.covariance = p_next;
        self.time = time;
        self.push_innovation(innovation);
        self.refresh_gain()
    }

    fn push_innovation(&mut self, v: DVector<f64>) {
        if self.window.len() == self.window_len {
            if let Some(old) = self.window.pop_front() {
                self.window_sum -= old;
            }
        }
        self.window_sum += &v;
        self.window.push_back(v);
    }

    fn refresh_gain(&mut self) -> Result<(), EkfError> {
        let jac = select_rows(&self.model.measurement_jacobian(&self.belief.estimate), &self.retained);
        let r_inv = match &self.noise_cache {
            Some((_, r_inv)) => r_inv.clone(),
            None => reduced_noise(&self.model, &self.retained, self.time, &self.removed)?.1,
        };
        self.gain = &self.belief.covariance * jac.transpose() * r_inv;
        self.jacobian = jac;
        Ok(())
    }
}

fn reduced_noise(
    model: &SystemModel,
    retained: &[usize],
    t: f64,
    pattern: &FaultPattern,
) -> Result<(DMatrix<f64>, DMatrix<f64>), EkfError> {
    let nu = select_block(&model.measurement_noise(t), retained);
    let r = &nu * nu.transpose();
    let r_inv = r
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| EkfError::NoiseDegenerate { pattern: pattern.to_string() })?;
    Ok((nu, r_inv))
}
