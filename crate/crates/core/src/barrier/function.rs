use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ekf::BeliefState;

/// Branch values closer than this are reported as a kink.
pub const NONSMOOTH_GAP: f64 = 1e-9;

/// Planar (or general) point extracted from the state, on which geometric
/// barriers are defined.
#[derive(Debug, Clone, PartialEq)]
pub enum PointMap {
    /// The listed state coordinates, in order.
    Coordinates(Vec<usize>),
    /// Look-ahead point `(x_b + d cos x_{b+2}, x_{b+1} + d sin x_{b+2})` of a
    /// unicycle whose state starts at index `b`.
    LookAhead { base: usize, offset: f64 },
}

impl PointMap {
    pub fn planar(x: usize, y: usize) -> Self {
        PointMap::Coordinates(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        match self {
            PointMap::Coordinates(idx) => idx.len(),
            PointMap::LookAhead { .. } => 2,
        }
    }

    pub fn point(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            PointMap::Coordinates(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i])),
            PointMap::LookAhead { base, offset } => {
                let (s, c) = x[base + 2].sin_cos();
                DVector::from_column_slice(&[x[*base] + offset * c, x[base + 1] + offset * s])
            }
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut j = DMatrix::zeros(self.dim(), n);
        match self {
            PointMap::Coordinates(idx) => {
                for (r, &i) in idx.iter().enumerate() {
                    j[(r, i)] = 1.0;
                }
            }
            PointMap::LookAhead { base, offset } => {
                let (s, c) = x[base + 2].sin_cos();
                j[(0, *base)] = 1.0;
                j[(1, base + 1)] = 1.0;
                j[(0, base + 2)] = -offset * s;
                j[(1, base + 2)] = offset * c;
            }
        }
        j
    }

    /// `Σ_k w_k ∂²p_k/∂x²`.
    pub fn weighted_hessian(&self, x: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        if let PointMap::LookAhead { base, offset } = self {
            let (s, c) = x[base + 2].sin_cos();
            h[(base + 2, base + 2)] = -offset * (w[0] * c + w[1] * s);
        }
        h
    }

    /// Global Lipschitz constant of the map.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PointMap::Coordinates(_) => 1.0,
            PointMap::LookAhead { offset, .. } => (1.0 + offset * offset).sqrt(),
        }
    }
}

/// Value and derivatives of a barrier at one belief.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    /// `∂h/∂x̂`.
    pub gradient: DVector<f64>,
    /// `∂²h/∂x̂²`.
    pub hessian: DMatrix<f64>,
    /// `∂h/∂P`, absent when `h` ignores the covariance.
    pub covariance_gradient: Option<DMatrix<f64>>,
    /// Two branches of a min or max were within [`NONSMOOTH_GAP`].
    pub nonsmooth: bool,
}

/// User-supplied barrier. Its margin needs a Lipschitz bound.
pub trait CustomBarrier: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn evaluate(&self, belief: &BeliefState) -> BarrierEval;
    /// Lipschitz constant of `h` in the estimate on the working domain.
    fn lipschitz(&self) -> Option<f64>;
}

#[derive(Debug)]
struct NegatedCustom(Arc<dyn CustomBarrier>, String);

impl CustomBarrier for NegatedCustom {
    fn name(&self) -> &str {
        &self.1
    }
    fn evaluate(&self, belief: &BeliefState) -> BarrierEval {
        let e = self.0.evaluate(belief);
        BarrierEval {
            value: -e.value,
            gradient: -e.gradient,
            hessian: -e.hessian,
            covariance_gradient: e.covariance_gradient.map(|g| -g),
            nonsmooth: e.nonsmooth,
        }
    }
    fn lipschitz(&self) -> Option<f64> {
        self.0.lipschitz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierClass {
    BallAvoid,
    BallReach,
    Halfspace,
    TraceBound,
    Constant,
    Custom,
    Composite,
}

/// Differentiable function of a belief; the safe or goal set is `{h ≥ 0}`.
#[derive(Debug, Clone)]
pub enum BarrierFn {
    /// `‖p − c‖² − r²`.
    BallAvoid { map: PointMap, center: DVector<f64>, radius: f64 },
    /// `r² − ‖p − c‖²`.
    BallReach { map: PointMap, center: DVector<f64>, radius: f64 },
    /// `nᵀp − offset` with unit `n`.
    Halfspace { map: PointMap, normal: DVector<f64>, offset: f64 },
    /// `sign · (bound − tr P)`, with `sign = 1` for an upper bound on the trace.
    Trace { bound: f64, sign: f64 },
    Const(f64),
    Custom(Arc<dyn CustomBarrier>),
    /// Hard minimum: every child must be nonnegative.
    Min(Vec<BarrierFn>),
    /// Hard maximum: some child must be nonnegative.
    Max(Vec<BarrierFn>),
}

impl BarrierFn {
    pub fn ball_avoid(map: PointMap, center: &[f64], radius: f64) -> Self {
        BarrierFn::BallAvoid { map, center: DVector::from_column_slice(center), radius }
    }

    pub fn ball_reach(map: PointMap, center: &[f64], radius: f64) -> Self {
        BarrierFn::BallReach { map, center: DVector::from_column_slice(center), radius }
    }

    /// `{nᵀp ≥ offset}`; the normal is scaled to unit length.
    pub fn halfspace(map: PointMap, normal: &[f64], offset: f64) -> Self {
        let n = DVector::from_column_slice(normal);
        let len = n.norm();
        BarrierFn::Halfspace { map, normal: n / len, offset: offset / len }
    }

    /// `tr P ≤ bound`.
    pub fn trace_bound(bound: f64) -> Self {
        BarrierFn::Trace { bound, sign: 1.0 }
    }

    pub fn class(&self) -> BarrierClass {
        match self {
            BarrierFn::BallAvoid { .. } => BarrierClass::BallAvoid,
            BarrierFn::BallReach { .. } => BarrierClass::BallReach,
            BarrierFn::Halfspace { .. } => BarrierClass::Halfspace,
            BarrierFn::Trace { .. } => BarrierClass::TraceBound,
            BarrierFn::Const(_) => BarrierClass::Constant,
            BarrierFn::Custom(_) => BarrierClass::Custom,
            BarrierFn::Min(_) | BarrierFn::Max(_) => BarrierClass::Composite,
        }
    }

    /// `−h`, built structurally so the result stays in the library classes.
    pub fn negate(&self) -> BarrierFn {
        match self {
            BarrierFn::BallAvoid { map, center, radius } => {
                BarrierFn::BallReach { map: map.clone(), center: center.clone(), radius: *radius }
            }
            BarrierFn::BallReach { map, center, radius } => {
                BarrierFn::BallAvoid { map: map.clone(), center: center.clone(), radius: *radius }
            }
            BarrierFn::Halfspace { map, normal, offset } => {
                BarrierFn::Halfspace { map: map.clone(), normal: -normal, offset: -offset }
            }
            BarrierFn::Trace { bound, sign } => BarrierFn::Trace { bound: *bound, sign: -sign },
            BarrierFn::Const(c) => BarrierFn::Const(-c),
            BarrierFn::Custom(c) => {
                let name = format!("not {}", c.name());
                BarrierFn::Custom(Arc::new(NegatedCustom(c.clone(), name)))
            }
            BarrierFn::Min(ch) => BarrierFn::Max(ch.iter().map(BarrierFn::negate).collect()),
            BarrierFn::Max(ch) => BarrierFn::Min(ch.iter().map(BarrierFn::negate).collect()),
        }
    }

    pub fn value(&self, b: &BeliefState) -> f64 {
        match self {
            BarrierFn::BallAvoid { map, center, radius } => {
                (map.point(&b.estimate) - center).norm_squared() - radius * radius
            }
            BarrierFn::BallReach { map, center, radius } => {
                radius * radius - (map.point(&b.estimate) - center).norm_squared()
            }
            BarrierFn::Halfspace { map, normal, offset } => normal.dot(&map.point(&b.estimate)) - offset,
            BarrierFn::Trace { bound, sign } => sign * (bound - b.covariance.trace()),
            BarrierFn::Const(c) => *c,
            BarrierFn::Custom(c) => c.evaluate(b).value,
            BarrierFn::Min(ch) => ch.iter().map(|c| c.value(b)).fold(f64::INFINITY, f64::min),
            BarrierFn::Max(ch) => ch.iter().map(|c| c.value(b)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Index of the branch attaining a min or max, lowest index on ties,
    /// and whether a runner-up is within [`NONSMOOTH_GAP`].
    pub fn active_branch(&self, b: &BeliefState) -> Option<(usize, bool)> {
        let (children, sign) = match self {
            BarrierFn::Min(ch) => (ch, 1.0),
            BarrierFn::Max(ch) => (ch, -1.0),
            _ => return None,
        };
        if children.is_empty() {
            return None;
        }
        let vals: Vec<f64> = children.iter().map(|c| sign * c.value(b)).collect();
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v < vals[best] {
                best = i;
            }
        }
        let kink = vals.iter().enumerate().any(|(i, v)| i != best && (v - vals[best]).abs() <= NONSMOOTH_GAP);
        Some((best, kink))
    }

    pub fn evaluate(&self, b: &BeliefState) -> BarrierEval {
        let n = b.dim();
        let plain = |value: f64, gradient: DVector<f64>, hessian: DMatrix<f64>| BarrierEval {
            value,
            gradient,
            hessian,
            covariance_gradient: None,
            nonsmooth: false,
        };
        match self {
            BarrierFn::BallAvoid { map, center, radius } | BarrierFn::BallReach { map, center, radius } => {
                let s = if matches!(self, BarrierFn::BallAvoid { .. }) { 1.0 } else { -1.0 };
                let x = &b.estimate;
                let diff = map.point(x) - center;
                let jac = map.jacobian(x);
                let gradient = jac.transpose() * &diff * (2.0 * s);
                let hessian = (jac.transpose() * &jac * 2.0 + map.weighted_hessian(x, &(&diff * 2.0))) * s;
                plain(s * (diff.norm_squared() - radius * radius), gradient, hessian)
            }
            BarrierFn::Halfspace { map, normal, offset } => {
                let x = &b.estimate;
                let gradient = map.jacobian(x).transpose() * normal;
                let hessian = map.weighted_hessian(x, normal);
                plain(normal.dot(&map.point(x)) - offset, gradient, hessian)
            }
            BarrierFn::Trace { bound, sign } => BarrierEval {
                value: sign * (bound - b.covariance.trace()),
                gradient: DVector::zeros(n),
                hessian: DMatrix::zeros(n, n),
                covariance_gradient: Some(DMatrix::identity(n, n) * -sign),
                nonsmooth: false,
            },
            BarrierFn::Const(c) => plain(*c, DVector::zeros(n), DMatrix::zeros(n, n)),
            BarrierFn::Custom(c) => c.evaluate(b),
            BarrierFn::Min(ch) | BarrierFn::Max(ch) => match self.active_branch(b) {
                Some((i, kink)) => {
                    let mut e = ch[i].evaluate(b);
                    e.nonsmooth |= kink;
                    e
                }
                None => {
                    let v = if matches!(self, BarrierFn::Min(_)) { f64::INFINITY } else { f64::NEG_INFINITY };
                    plain(v, DVector::zeros(n), DMatrix::zeros(n, n))
                }
            },
        }
    }

    /// Leaves that each receive their own constraint row: every child of a
    /// minimum, and the attaining child of a maximum.
    pub fn constraint_leaves<'a>(&'a self, b: &BeliefState) -> Vec<&'a BarrierFn> {
        let mut out = Vec::new();
        self.collect_leaves(b, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, b: &BeliefState, out: &mut Vec<&'a BarrierFn>) {
        match self {
            BarrierFn::Min(ch) => ch.iter().for_each(|c| c.collect_leaves(b, out)),
            BarrierFn::Max(ch) => {
                if let Some((i, _)) = self.active_branch(b) {
                    ch[i].collect_leaves(b, out);
                }
            }
            leaf => out.push(leaf),
        }
    }

    /// Whether the barrier reads the covariance anywhere.
    pub fn depends_on_covariance(&self) -> bool {
        match self {
            BarrierFn::Trace { .. } | BarrierFn::Custom(_) => true,
            BarrierFn::Min(ch) | BarrierFn::Max(ch) => ch.iter().any(BarrierFn::depends_on_covariance),
            _ => false,
        }
    }
}

impl fmt::Display for PointMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointMap::Coordinates(idx) => {
                let s: Vec<String> = idx.iter().map(|i| format!("x{i}")).collect();
                write!(f, "({})", s.join(","))
            }
            PointMap::LookAhead { base, offset } => write!(f, "lookahead(x{base}, d={offset})"),
        }
    }
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", s.join(", "))
}

impl fmt::Display for BarrierFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BarrierFn::BallAvoid { map, center, radius } => {
                write!(f, "outside {map} ball {} r={radius}", fmt_vec(center))
            }
            BarrierFn::BallReach { map, center, radius } => {
                write!(f, "inside {map} ball {} r={radius}", fmt_vec(center))
            }
            BarrierFn::Halfspace { map, normal, offset } => write!(f, "{} . {map} >= {offset}", fmt_vec(normal)),
            BarrierFn::Trace { bound, sign } if *sign > 0.0 => write!(f, "tr(P) <= {bound}"),
            BarrierFn::Trace { bound, .. } => write!(f, "tr(P) >= {bound}"),
            BarrierFn::Const(c) => write!(f, "{c}"),
            BarrierFn::Custom(c) => write!(f, "{}", c.name()),
            BarrierFn::Min(ch) | BarrierFn::Max(ch) => {
                let op = if matches!(self, BarrierFn::Min(_)) { "min" } else { "max" };
                let parts: Vec<String> = ch.iter().map(|c| c.to_string()).collect();
                write!(f, "{op}({})", parts.join("; "))
            }
        }
    }
}
