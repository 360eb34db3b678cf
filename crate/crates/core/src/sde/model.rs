use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::SdeError;
use crate::linalg::{block_diagonal, min_eigenvalue};

const FD_STEP: f64 = 1e-6;

/// Control-affine dynamics `f(x) + g(x) u`.
///
/// Jacobians default to central finite differences; implementations with
/// closed forms should override them.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `n × p` input matrix.
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            let col = (self.drift(&xp) - self.drift(&xm)) / (2.0 * FD_STEP);
            jac.set_column(j, &col);
        }
        jac
    }

    /// `∂g_k/∂x` for every input column `k`, each `n × n`.
    fn input_map_jacobians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = self.state_dim();
        let p = self.input_dim();
        let mut out = vec![DMatrix::zeros(n, n); p];
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            let diff = (self.input_map(&xp) - self.input_map(&xm)) / (2.0 * FD_STEP);
            for (k, jac) in out.iter_mut().enumerate() {
                jac.set_column(j, &diff.column(k));
            }
        }
        out
    }
}

/// `f(x) = A x`, `g(x) = B`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn input_map_jacobians(&self, _x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = self.state_dim();
        vec![DMatrix::zeros(n, n); self.input_dim()]
    }
}

type VecFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Dynamics from closures; Jacobians by finite differences.
#[derive(Clone)]
pub struct FnDynamics {
    n: usize,
    p: usize,
    f: Arc<VecFn>,
    g: Arc<MatFn>,
}

impl FnDynamics {
    pub fn new(
        n: usize,
        p: usize,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        g: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { n, p, f: Arc::new(f), g: Arc::new(g) }
    }
}

impl fmt::Debug for FnDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDynamics").field("n", &self.n).field("p", &self.p).finish()
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.p
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.g)(x)
    }
}

/// Block-diagonal composition of independent subsystems: states and inputs
/// are concatenated in order.
#[derive(Debug, Clone)]
pub struct StackedDynamics {
    parts: Vec<Arc<dyn Dynamics>>,
}

impl StackedDynamics {
    pub fn new(parts: Vec<Arc<dyn Dynamics>>) -> Self {
        Self { parts }
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, &Arc<dyn Dynamics>)> {
        let mut xo = 0;
        let mut uo = 0;
        self.parts.iter().map(move |part| {
            let out = (xo, uo, part);
            xo += part.state_dim();
            uo += part.input_dim();
            out
        })
    }
}

impl Dynamics for StackedDynamics {
    fn state_dim(&self) -> usize {
        self.parts.iter().map(|p| p.state_dim()).sum()
    }
    fn input_dim(&self) -> usize {
        self.parts.iter().map(|p| p.input_dim()).sum()
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim());
        for (xo, _, part) in self.offsets() {
            let n = part.state_dim();
            let sub = x.rows(xo, n).into_owned();
            out.rows_mut(xo, n).copy_from(&part.drift(&sub));
        }
        out
    }
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.state_dim(), self.input_dim());
        for (xo, uo, part) in self.offsets() {
            let n = part.state_dim();
            let sub = x.rows(xo, n).into_owned();
            out.view_mut((xo, uo), (n, part.input_dim())).copy_from(&part.input_map(&sub));
        }
        out
    }
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n_all = self.state_dim();
        let mut out = DMatrix::zeros(n_all, n_all);
        for (xo, _, part) in self.offsets() {
            let n = part.state_dim();
            let sub = x.rows(xo, n).into_owned();
            out.view_mut((xo, xo), (n, n)).copy_from(&part.drift_jacobian(&sub));
        }
        out
    }
    fn input_map_jacobians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n_all = self.state_dim();
        let mut out = Vec::with_capacity(self.input_dim());
        for (xo, _, part) in self.offsets() {
            let n = part.state_dim();
            let sub = x.rows(xo, n).into_owned();
            for jac in part.input_map_jacobians(&sub) {
                let mut full = DMatrix::zeros(n_all, n_all);
                full.view_mut((xo, xo), (n, n)).copy_from(&jac);
                out.push(full);
            }
        }
        out
    }
}

/// Nonlinear measurement `m(x)` with its Jacobian.
pub trait MeasurementHook: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Sensor model: the constant matrix `c`, or a nonlinear hook replacing `c x`.
#[derive(Debug, Clone)]
pub enum Observation {
    Linear(DMatrix<f64>),
    Hook(Arc<dyn MeasurementHook>),
}

impl Observation {
    pub fn output_dim(&self) -> usize {
        match self {
            Observation::Linear(c) => c.nrows(),
            Observation::Hook(h) => h.output_dim(),
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Observation::Linear(c) => c.ncols(),
            Observation::Hook(h) => h.state_dim(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Observation::Linear(c) => c * x,
            Observation::Hook(h) => h.value(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Observation::Linear(c) => c.clone(),
            Observation::Hook(h) => h.jacobian(x),
        }
    }
}

/// Sensor blocks of stacked subsystems, outputs concatenated in order.
#[derive(Debug, Clone)]
pub struct StackedMeasurement {
    parts: Vec<(Observation, usize)>,
}

impl StackedMeasurement {
    /// `parts` pairs each observation with the state dimension of its block.
    pub fn new(parts: Vec<(Observation, usize)>) -> Self {
        Self { parts }
    }
}

impl MeasurementHook for StackedMeasurement {
    fn state_dim(&self) -> usize {
        self.parts.iter().map(|(_, n)| n).sum()
    }
    fn output_dim(&self) -> usize {
        self.parts.iter().map(|(o, _)| o.output_dim()).sum()
    }
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.output_dim());
        let (mut xo, mut yo) = (0, 0);
        for (obs, n) in &self.parts {
            let q = obs.output_dim();
            out.rows_mut(yo, q).copy_from(&obs.value(&x.rows(xo, *n).into_owned()));
            xo += n;
            yo += q;
        }
        out
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.output_dim(), self.state_dim());
        let (mut xo, mut yo) = (0, 0);
        for (obs, n) in &self.parts {
            let q = obs.output_dim();
            out.view_mut((yo, xo), (q, *n)).copy_from(&obs.jacobian(&x.rows(xo, *n).into_owned()));
            xo += n;
            yo += q;
        }
        out
    }
}

type ScheduleFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// Noise intensity `σ(t)` or `ν(t)`.
#[derive(Clone)]
pub enum NoiseProfile {
    Constant(DMatrix<f64>),
    Schedule { dim: usize, at: Arc<ScheduleFn> },
}

impl NoiseProfile {
    pub fn diagonal(values: &[f64]) -> Self {
        NoiseProfile::Constant(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            NoiseProfile::Constant(m) => m.clone(),
            NoiseProfile::Schedule { at, .. } => at(t),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseProfile::Constant(m) => m.nrows(),
            NoiseProfile::Schedule { dim, .. } => *dim,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, NoiseProfile::Constant(_))
    }
}

impl fmt::Debug for NoiseProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseProfile::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            NoiseProfile::Schedule { dim, .. } => f.debug_struct("Schedule").field("dim", dim).finish(),
        }
    }
}

/// Plant plus sensors. Immutable after construction and cheap to clone.
#[derive(Debug, Clone)]
pub struct SystemModel {
    dynamics: Arc<dyn Dynamics>,
    diffusion: NoiseProfile,
    observation: Observation,
    measurement_noise: NoiseProfile,
}

impl SystemModel {
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        diffusion: NoiseProfile,
        observation: Observation,
        measurement_noise: NoiseProfile,
    ) -> Result<Self, SdeError> {
        let n = dynamics.state_dim();
        let q = observation.output_dim();
        if diffusion.dim() != n {
            return Err(SdeError::Dimension(format!("diffusion is {}-dimensional, state is {n}", diffusion.dim())));
        }
        if observation.state_dim() != n {
            return Err(SdeError::Dimension(format!(
                "observation expects a {}-dimensional state, plant has {n}",
                observation.state_dim()
            )));
        }
        if measurement_noise.dim() != q {
            return Err(SdeError::Dimension(format!(
                "measurement noise is {}-dimensional, there are {q} outputs",
                measurement_noise.dim()
            )));
        }
        let model = Self { dynamics, diffusion, observation, measurement_noise };
        model.check_noise_psd(0.0)?;
        Ok(model)
    }

    /// Linear plant `dx = (A x + B u) dt + σ dW`, `dy = (C x + a) dt + ν dV`.
    pub fn linear(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma: DMatrix<f64>,
        nu: DMatrix<f64>,
    ) -> Result<Self, SdeError> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
            return Err(SdeError::Dimension(format!("A is {:?}, B is {:?}", a.shape(), b.shape())));
        }
        Self::new(
            Arc::new(LinearDynamics { a, b }),
            NoiseProfile::Constant(sigma),
            Observation::Linear(c),
            NoiseProfile::Constant(nu),
        )
    }

    /// Block-diagonal joint plant of independent subsystems.
    pub fn stack(parts: &[SystemModel]) -> Result<Self, SdeError> {
        if parts.is_empty() {
            return Err(SdeError::InvalidParameter("cannot stack zero subsystems".into()));
        }
        let dynamics = StackedDynamics::new(parts.iter().map(|m| m.dynamics.clone()).collect());
        let observation = StackedMeasurement::new(
            parts.iter().map(|m| (m.observation.clone(), m.state_dim())).collect(),
        );
        let diffusion = stack_profiles(parts.iter().map(|m| m.diffusion.clone()).collect());
        let measurement_noise = stack_profiles(parts.iter().map(|m| m.measurement_noise.clone()).collect());
        Self::new(Arc::new(dynamics), diffusion, Observation::Hook(Arc::new(observation)), measurement_noise)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }
    pub fn output_dim(&self) -> usize {
        self.observation.output_dim()
    }
    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }
    pub fn observation(&self) -> &Observation {
        &self.observation
    }
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dynamics.drift(x)
    }
    pub fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.dynamics.input_map(x)
    }
    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.dynamics.drift_jacobian(x)
    }
    pub fn input_map_jacobians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.dynamics.input_map_jacobians(x)
    }

    /// `∂(f + g u)/∂x`.
    pub fn closed_loop_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.drift_jacobian(x);
        for (k, gk) in self.input_map_jacobians(x).iter().enumerate() {
            if u[k] != 0.0 {
                a += gk * u[k];
            }
        }
        a
    }

    pub fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        self.observation.value(x)
    }
    pub fn measurement_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.observation.jacobian(x)
    }
    pub fn diffusion(&self, t: f64) -> DMatrix<f64> {
        self.diffusion.at(t)
    }
    pub fn measurement_noise(&self, t: f64) -> DMatrix<f64> {
        self.measurement_noise.at(t)
    }
    pub fn measurement_noise_profile(&self) -> &NoiseProfile {
        &self.measurement_noise
    }
    /// `Q = σσᵀ`.
    pub fn process_covariance(&self, t: f64) -> DMatrix<f64> {
        let s = self.diffusion(t);
        &s * s.transpose()
    }
    /// `R = ννᵀ`.
    pub fn measurement_covariance(&self, t: f64) -> DMatrix<f64> {
        let v = self.measurement_noise(t);
        &v * v.transpose()
    }

    /// Checks that `Q(t)` and `R(t)` are symmetric positive semidefinite.
    pub fn check_noise_psd(&self, t: f64) -> Result<(), SdeError> {
        for (name, cov) in [("Q", self.process_covariance(t)), ("R", self.measurement_covariance(t))] {
            if !crate::linalg::all_finite_mat(&cov) {
                return Err(SdeError::InvalidParameter(format!("{name}({t}) has non-finite entries")));
            }
            let scale = cov.amax().max(1.0);
            if min_eigenvalue(&cov) < -1e-12 * scale {
                return Err(SdeError::InvalidParameter(format!("{name}({t}) is not positive semidefinite")));
            }
        }
        Ok(())
    }

    /// Largest Frobenius norm (an upper bound on the spectral norm) of the Jacobians of `f` and of
    /// each column of `g` over the given states. Used to spot-check local
    /// Lipschitz bounds on a working domain.
    pub fn lipschitz_spot_check<'a>(&self, states: impl IntoIterator<Item = &'a DVector<f64>>) -> f64 {
        let mut worst: f64 = 0.0;
        for x in states {
            worst = worst.max(self.drift_jacobian(x).norm());
            for gk in self.input_map_jacobians(x) {
                worst = worst.max(gk.norm());
            }
        }
        worst
    }
}

fn stack_profiles(parts: Vec<NoiseProfile>) -> NoiseProfile {
    if parts.iter().all(NoiseProfile::is_constant) {
        let blocks: Vec<_> = parts.iter().map(|p| p.at(0.0)).collect();
        return NoiseProfile::Constant(block_diagonal(&blocks));
    }
    let dim = parts.iter().map(NoiseProfile::dim).sum();
    NoiseProfile::Schedule {
        dim,
        at: Arc::new(move |t| {
            let blocks: Vec<_> = parts.iter().map(|p| p.at(t)).collect();
            block_diagonal(&blocks)
        }),
    }
}
