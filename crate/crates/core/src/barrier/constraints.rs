use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{eps_margin, BarrierError, BarrierFn, EpsMargin};
use crate::ekf::EkfInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Keeps `{h ≥ 0}` invariant.
    Safety,
    /// Drives the belief into `{d ≥ 0}` in finite time.
    Reach,
}

/// Halfspace `normalᵀu ≥ offset` on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub normal: DVector<f64>,
    pub offset: f64,
    pub kind: ConstraintKind,
    pub pattern: usize,
    pub subtask: usize,
    /// The row carries covariance terms.
    pub covariance: bool,
}

impl LinearConstraint {
    pub fn slack(&self, u: &DVector<f64>) -> f64 {
        self.normal.dot(u) - self.offset
    }
}

/// `sgn(z)|z|`, written out to mirror the finite-time condition.
pub fn signed_abs(z: f64) -> f64 {
    let sgn = if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    };
    sgn * z.abs()
}

/// Belief-dependent quantities shared by every row of one filter at one step.
#[derive(Debug, Clone)]
pub struct BeliefDynamics<'a> {
    pub ekf: &'a EkfInstance,
    pub eps: f64,
    drift: DVector<f64>,
    input_map: DMatrix<f64>,
    /// `K Hᵢ`.
    gain_obs: DMatrix<f64>,
    /// `K νᵢ`.
    gain_noise: DMatrix<f64>,
    /// Input-free covariance drift `A_f P + P A_fᵀ + Q − K Hᵢ P`.
    covariance_drift: DMatrix<f64>,
    /// `∂g_k/∂x P + P ∂g_k/∂xᵀ` per input.
    covariance_input: Vec<DMatrix<f64>>,
}

impl<'a> BeliefDynamics<'a> {
    pub fn new(ekf: &'a EkfInstance, eps: f64) -> Self {
        let model = ekf.model();
        let x = ekf.estimate();
        let p = ekf.covariance();
        let gain_obs = ekf.gain() * ekf.observation_jacobian();
        let gain_noise = ekf.gain() * ekf.reduced_noise();
        let af = model.drift_jacobian(x);
        let afp = &af * p;
        let covariance_drift = &afp + afp.transpose() + model.process_covariance(ekf.time()) - &gain_obs * p;
        let covariance_input = model
            .input_map_jacobians(x)
            .into_iter()
            .map(|gk| {
                let gp = gk * p;
                &gp + gp.transpose()
            })
            .collect();
        Self {
            ekf,
            eps,
            drift: model.drift(x),
            input_map: model.input_map(x),
            gain_obs,
            gain_noise,
            covariance_drift,
            covariance_input,
        }
    }

    /// `(a, c)` such that the generator of `h` along the filter, with the
    /// worst-case estimation error of size `ε`, is `aᵀu + c`.
    pub fn generator(&self, leaf: &BarrierFn) -> (DVector<f64>, f64) {
        let e = leaf.evaluate(self.ekf.belief());
        let mut normal = self.input_map.transpose() * &e.gradient;
        let lie_f = e.gradient.dot(&self.drift);
        let error_term = self.eps * (e.gradient.transpose() * &self.gain_obs).norm();
        let ito = 0.5 * (self.gain_noise.transpose() * &e.hessian * &self.gain_noise).trace();
        let mut offset = lie_f - error_term + ito;
        if let Some(dp) = &e.covariance_gradient {
            offset += dp.component_mul(&self.covariance_drift).sum();
            for (k, gk) in self.covariance_input.iter().enumerate() {
                normal[k] += dp.component_mul(gk).sum();
            }
        }
        (normal, offset)
    }
}

/// Safety row for one leaf barrier: `aᵀu + c ≥ −ĥ`.
pub fn omega_constraint(dyn_: &BeliefDynamics<'_>, h: &BarrierFn, margin: &EpsMargin) -> LinearConstraint {
    let (normal, c) = dyn_.generator(h);
    let h_hat = margin.shifted(h.value(dyn_.ekf.belief()));
    LinearConstraint {
        offset: -h_hat - c,
        covariance: h.depends_on_covariance(),
        normal,
        kind: ConstraintKind::Safety,
        pattern: 0,
        subtask: 0,
    }
}

/// Reach row for one leaf barrier: `aᵀu + c ≥ −sgn(d̂)|d̂|`.
pub fn gamma_constraint(dyn_: &BeliefDynamics<'_>, d: &BarrierFn, margin: &EpsMargin) -> LinearConstraint {
    let (normal, c) = dyn_.generator(d);
    let d_hat = margin.shifted(d.value(dyn_.ekf.belief()));
    LinearConstraint {
        offset: -signed_abs(d_hat) - c,
        covariance: d.depends_on_covariance(),
        normal,
        kind: ConstraintKind::Reach,
        pattern: 0,
        subtask: 0,
    }
}

/// Rows for every constraint leaf of `h`, each leaf with its own margin.
pub fn barrier_rows(
    dyn_: &BeliefDynamics<'_>,
    h: &BarrierFn,
    kind: ConstraintKind,
    pattern: usize,
    subtask: usize,
) -> Result<Vec<LinearConstraint>, BarrierError> {
    let mut rows = Vec::new();
    for leaf in h.constraint_leaves(dyn_.ekf.belief()) {
        let margin = eps_margin(leaf, dyn_.eps)?;
        let mut row = match kind {
            ConstraintKind::Safety => omega_constraint(dyn_, leaf, &margin),
            ConstraintKind::Reach => gamma_constraint(dyn_, leaf, &margin),
        };
        row.pattern = pattern;
        row.subtask = subtask;
        rows.push(row);
    }
    Ok(rows)
}

/// Left side minus right side of the finite-time condition for `h` at
/// input `u`; the minimum over constraint leaves for composites.
pub fn sfcbf_value(h: &BarrierFn, dyn_: &BeliefDynamics<'_>, u: &DVector<f64>) -> Result<f64, BarrierError> {
    let mut worst = f64::INFINITY;
    for leaf in h.constraint_leaves(dyn_.ekf.belief()) {
        let margin = eps_margin(leaf, dyn_.eps)?;
        let (normal, c) = dyn_.generator(leaf);
        let value = normal.dot(u) + c + signed_abs(margin.shifted(leaf.value(dyn_.ekf.belief())));
        worst = worst.min(value);
    }
    Ok(worst)
}
