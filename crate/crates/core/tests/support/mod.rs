//! Reference implementations used as test oracles. None of them share code
//! with the library beyond plain data types.
#![allow(dead_code)]

use std::path::PathBuf;

use ftcbf::automata::{Dra, RabinPair};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Random symmetric positive definite matrix with eigenvalues bounded below
/// by `floor`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = gaussian_matrix(rng, n, n);
    &l * l.transpose() * 0.5 + DMatrix::identity(n, n) * floor
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

// ---------------------------------------------------------------- Riccati

/// Solves `A X + X Aᵀ + W = 0` through the Kronecker form.
pub fn lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(w.as_slice());
    let x = big.lu().solve(&rhs).expect("Lyapunov operator is singular");
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    (&x + x.transpose()) * 0.5
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Stabilising root of the filter algebraic Riccati equation
/// `A P + P Aᵀ + Q − P Cᵀ R⁻¹ C P = 0`, by Newton–Kleinman iteration.
pub fn care(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().expect("R must be invertible");
    // Bass gain on the dual pair: with β above every |Re λ(A)|,
    // (Aᵀ+βI)W + W(A+βI) = 2CᵀC and L = W⁻¹Cᵀ make A − LC Hurwitz.
    let beta = a.complex_eigenvalues().iter().map(|l| l.re.abs()).fold(0.0, f64::max) + 1.0;
    let shifted = a.transpose() + DMatrix::identity(n, n) * beta;
    let w = lyapunov(&shifted, &(-(c.transpose() * c) * 2.0));
    let gain = w.try_inverse().expect("(A, C) must be observable") * c.transpose();
    assert!(is_hurwitz(&(a - &gain * c)), "no stabilising start found");
    let mut p = lyapunov(&(a - &gain * c), &(q + &gain * r * gain.transpose()));
    for _ in 0..200 {
        let k = &p * c.transpose() * &r_inv;
        let ak = a - &k * c;
        let next = lyapunov(&ak, &(q + &k * r * k.transpose()));
        let change = (&next - &p).norm();
        p = next;
        if change <= 1e-14 * p.norm().max(1.0) {
            break;
        }
    }
    p
}

pub fn care_residual(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let r_inv = r.clone().try_inverse().expect("invertible");
    (a * p + p * a.transpose() + q - p * c.transpose() * r_inv * c * p).norm()
}

// ---------------------------------------------------------------- QP

/// Minimiser of `uᵀMu` over `Au ≥ b` by enumerating every candidate active
/// set of at most `p` rows. `None` when no candidate is feasible, which for
/// a strictly convex problem means the feasible set is empty.
pub fn qp_by_enumeration(m: &DMatrix<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let p = m.nrows();
    let k = a.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut subset = Vec::new();
    enumerate_subsets(k, p, 0, &mut subset, &mut |rows| {
        let s = rows.len();
        let mut kkt = DMatrix::zeros(p + s, p + s);
        let mut rhs = DVector::zeros(p + s);
        kkt.view_mut((0, 0), (p, p)).copy_from(&(m * 2.0));
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..p {
                kkt[(c, p + j)] = -a[(r, c)];
                kkt[(p + j, c)] = a[(r, c)];
            }
            rhs[p + j] = b[r];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            return;
        }
        let Some(sol) = lu.solve(&rhs) else { return };
        let u = sol.rows(0, p).into_owned();
        let slack = a * &u - b;
        if slack.iter().any(|v| *v < -1e-9 * u.amax().max(1.0)) {
            return;
        }
        let obj = u.dot(&(m * &u));
        if best.as_ref().map_or(true, |(_, o)| obj < *o) {
            best = Some((u, obj));
        }
    });
    best
}

fn enumerate_subsets(k: usize, max: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    f(cur);
    if cur.len() == max {
        return;
    }
    for r in start..k {
        cur.push(r);
        enumerate_subsets(k, max, r + 1, cur, f);
        cur.pop();
    }
}

// ---------------------------------------------------------------- automata

/// Random automaton over `k` propositions with `n` states and one or two
/// Rabin pairs.
pub fn random_dra(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Dra {
    let letters = 1usize << k;
    let transitions: Vec<usize> = (0..n * letters).map(|_| rng.random_range(0..n)).collect();
    let pairs = (0..rng.random_range(1..=2))
        .map(|_| RabinPair {
            avoid: (0..n).filter(|_| rng.random_bool(0.2)).collect(),
            accept: (0..n).filter(|_| rng.random_bool(0.25)).collect(),
        })
        .collect();
    let states = (0..n).map(|i| format!("s{i}")).collect();
    let props = (0..k).map(|j| format!("p{j}")).collect();
    Dra::new(states, props, transitions, 0, pairs).expect("well-formed random automaton")
}

/// `(states, loop_start, pair)` of the first accepting simple lasso in the
/// order (length, state sequence, loop start), by exhaustive enumeration.
pub fn brute_force_lasso(dra: &Dra) -> Option<(Vec<usize>, usize, usize)> {
    let n = dra.num_states();
    let edge = |a: usize, b: usize| (0..dra.num_letters() as u32).any(|l| dra.next(a, l) == b);
    let accepts = |cycle: &[usize]| {
        dra.rabin_pairs().iter().position(|p| {
            cycle.iter().all(|s| !p.avoid.contains(s)) && cycle.iter().any(|s| p.accept.contains(s))
        })
    };
    // Existence first, so unsatisfiable automata skip the enumeration: some
    // reachable accept state must lie on a cycle through non-avoid states.
    let reach_from = |start: usize, allowed: &dyn Fn(usize) -> bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if !seen[b] && allowed(b) && edge(a, b) {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    };
    let mut reachable = reach_from(dra.initial(), &|_| true);
    reachable[dra.initial()] = true;
    let exists = dra.rabin_pairs().iter().any(|p| {
        let allowed = |s: usize| !p.avoid.contains(&s);
        p.accept.iter().any(|&a| reachable[a] && allowed(a) && reach_from(a, &allowed)[a])
    });
    if !exists {
        return None;
    }
    for len in 1..=n {
        let mut found = None;
        let mut path = vec![dra.initial()];
        simple_paths(n, len, &edge, &mut path, &mut |path| {
            let last = path[len - 1];
            for l in 0..len {
                if edge(last, path[l]) {
                    if let Some(pair) = accepts(&path[l..]) {
                        found = Some((path.to_vec(), l, pair));
                        return true;
                    }
                }
            }
            false
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

fn simple_paths(
    n: usize,
    len: usize,
    edge: &impl Fn(usize, usize) -> bool,
    path: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]) -> bool,
) -> bool {
    if path.len() == len {
        return visit(path);
    }
    let last = *path.last().expect("nonempty");
    for next in 0..n {
        if path.contains(&next) || !edge(last, next) {
            continue;
        }
        path.push(next);
        let stop = simple_paths(n, len, edge, path, visit);
        path.pop();
        if stop {
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------- calculus

/// Central difference of `f` along each coordinate.
pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[i] += step;
        lo[i] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    })
}

/// Central difference of a vector-valued `g` along each coordinate, one
/// column per coordinate.
pub fn central_jacobian(g: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..x.len())
        .map(|i| {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += step;
            lo[i] -= step;
            (g(&hi) - g(&lo)) / (2.0 * step)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

// ---------------------------------------------------------------- suites

/// Errors are measured relative to the instance scale: the objective gap
/// against `max(1, |obj|)`, stationarity and primal residuals against
/// `max(1, ‖u‖∞, ‖λ‖∞)`, complementarity against `max(1, ‖u‖∞·‖λ‖∞)`. On
/// well-scaled instances these are absolute errors.
#[derive(Debug, Default)]
pub struct QpSuite {
    pub feasible: usize,
    pub infeasible: usize,
    /// Feasible instances with `‖u‖∞` or `‖λ‖∞` above 10.
    pub large_scale: usize,
    pub worst_abs_gap: f64,
    pub worst_gap: f64,
    pub worst_stationarity: f64,
    pub worst_primal: f64,
    pub worst_complementarity: f64,
    pub worst_dual: f64,
    pub status_mismatches: usize,
    pub uncertified: usize,
}

/// Random QPs until `target` feasible ones have been compared against
/// enumeration. Rows have unit norm and the cost has eigenvalues of at
/// least 0.5. Half the draws are built around a known feasible point, half
/// take `b` at random and are often infeasible.
pub fn qp_suite(seed: u64, target: usize) -> QpSuite {
    use ftcbf::qp::{is_farkas_certificate, solve, QpProblem, SolveStatus, DEFAULT_TOL};
    let mut rng = rng(seed);
    let mut s = QpSuite::default();
    let mut draw = 0usize;
    while s.feasible < target {
        draw += 1;
        let p = rng.random_range(1..=4);
        let k = rng.random_range(1..=12);
        let m = random_spd(&mut rng, p, 0.5);
        let mut a = gaussian_matrix(&mut rng, k, p);
        for mut row in a.row_iter_mut() {
            let len = row.norm();
            row /= len;
        }
        let b = if draw % 2 == 0 {
            let u0 = gaussian_vector(&mut rng, p) * 2.0;
            let slack = DVector::from_fn(k, |_, _| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..1.0) });
            &a * u0 - slack
        } else {
            gaussian_vector(&mut rng, k) * 2.0
        };
        let problem = QpProblem::new(m.clone(), a.clone(), b.clone()).expect("valid problem");
        let sol = solve(&problem, DEFAULT_TOL).expect("solver converges");
        match (qp_by_enumeration(&m, &a, &b), sol.status) {
            (Some((_, obj)), SolveStatus::Optimal) => {
                s.feasible += 1;
                let (un, ln) = (sol.u.amax(), sol.multipliers.amax());
                let scale = 1.0_f64.max(un).max(ln);
                if scale > 10.0 {
                    s.large_scale += 1;
                }
                let gap = (problem.objective(&sol.u) - obj).abs();
                s.worst_abs_gap = s.worst_abs_gap.max(gap);
                s.worst_gap = s.worst_gap.max(gap / obj.abs().max(1.0));
                s.worst_stationarity = s.worst_stationarity.max(sol.stationarity_residual(&problem) / scale);
                s.worst_primal = s.worst_primal.max(sol.primal_violation(&problem) / scale);
                s.worst_complementarity =
                    s.worst_complementarity.max(sol.complementarity_residual(&problem) / (un * ln).max(1.0));
                s.worst_dual = s.worst_dual.max(sol.multipliers.iter().fold(0.0_f64, |w, l| w.max(-l)) / scale);
            }
            (None, SolveStatus::Infeasible) => {
                s.infeasible += 1;
                let ok = sol.certificate.as_ref().is_some_and(|c| is_farkas_certificate(&a, &b, c, 1e-9));
                if !ok {
                    s.uncertified += 1;
                }
            }
            (Some(_), SolveStatus::Infeasible) | (None, SolveStatus::Optimal) => {
                // Count an instance the oracle calls feasible as checked, so
                // the loop terminates even if the solver disagrees.
                s.status_mismatches += 1;
                s.feasible += 1;
            }
        }
    }
    s
}

// ---------------------------------------------------------------- barriers

/// `1 − x₀² − ½ sin(x₁) x₂ − 0.2 tr P − 0.1 P₀₀²`, a smooth barrier that
/// reads the covariance.
#[derive(Debug)]
pub struct WavyBarrier;

impl ftcbf::barrier::CustomBarrier for WavyBarrier {
    fn name(&self) -> &str {
        "wavy"
    }

    fn evaluate(&self, b: &ftcbf::BeliefState) -> ftcbf::barrier::BarrierEval {
        let x = &b.estimate;
        let p = &b.covariance;
        let n = x.len();
        let (s1, c1) = x[1].sin_cos();
        let mut gradient = DVector::zeros(n);
        gradient[0] = -2.0 * x[0];
        gradient[1] = -0.5 * c1 * x[2];
        gradient[2] = -0.5 * s1;
        let mut hessian = DMatrix::zeros(n, n);
        hessian[(0, 0)] = -2.0;
        hessian[(1, 1)] = 0.5 * s1 * x[2];
        hessian[(1, 2)] = -0.5 * c1;
        hessian[(2, 1)] = -0.5 * c1;
        let mut dp = DMatrix::identity(n, n) * -0.2;
        dp[(0, 0)] -= 0.2 * p[(0, 0)];
        ftcbf::barrier::BarrierEval {
            value: 1.0 - x[0] * x[0] - 0.5 * s1 * x[2] - 0.2 * p.trace() - 0.1 * p[(0, 0)].powi(2),
            gradient,
            hessian,
            covariance_gradient: Some(dp),
            nonsmooth: false,
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(10.0)
    }
}

/// One barrier of every library class on a 6-dimensional state made of two
/// unicycles, with random geometry.
pub fn barrier_zoo(rng: &mut ChaCha8Rng) -> Vec<ftcbf::barrier::BarrierFn> {
    use ftcbf::barrier::{BarrierFn, PointMap};
    use std::sync::Arc;
    let mut c = || [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
    let (c1, c2, c3) = (c(), c(), c());
    let d = 0.5;
    let look0 = PointMap::LookAhead { base: 0, offset: d };
    let look1 = PointMap::LookAhead { base: 3, offset: d };
    let avoid = BarrierFn::ball_avoid(look0.clone(), &c1, 1.2);
    let reach = BarrierFn::ball_reach(PointMap::planar(3, 4), &c2, 0.8);
    let half = BarrierFn::halfspace(look1.clone(), &[c3[0], c3[1]], 0.4);
    vec![
        avoid.clone(),
        BarrierFn::ball_avoid(PointMap::planar(0, 1), &c2, 0.7),
        reach.clone(),
        BarrierFn::ball_reach(look1, &c3, 1.5),
        half.clone(),
        BarrierFn::halfspace(PointMap::Coordinates(vec![2, 5]), &[1.0, -2.0], 0.1),
        BarrierFn::trace_bound(0.9),
        BarrierFn::trace_bound(0.9).negate(),
        BarrierFn::Const(0.3),
        BarrierFn::Custom(Arc::new(WavyBarrier)),
        BarrierFn::Custom(Arc::new(WavyBarrier)).negate(),
        BarrierFn::Min(vec![avoid.clone(), half.clone(), BarrierFn::trace_bound(0.9)]),
        BarrierFn::Max(vec![reach.clone(), avoid.negate()]),
        BarrierFn::Min(vec![BarrierFn::Max(vec![reach, half]), avoid]),
    ]
}

pub fn random_belief(rng: &mut ChaCha8Rng, n: usize) -> ftcbf::BeliefState {
    let x = gaussian_vector(rng, n) * 2.0;
    let l = gaussian_matrix(rng, n, n) * 0.2;
    ftcbf::BeliefState::new(x, &l * l.transpose() + DMatrix::identity(n, n) * 0.01)
}

#[derive(Debug, Default)]
pub struct GradientSuite {
    pub checked: usize,
    /// Skipped because a min or max was within the kink gap.
    pub skipped_kinks: usize,
    /// `‖∇h − ∇_FD h‖ / max(1, ‖∇h‖)`.
    pub worst_gradient: f64,
    /// Same for `∂h/∂P`, entrywise.
    pub worst_covariance: f64,
    /// `‖∇²h − ∇_FD ∇h‖ / max(1, ‖∇²h‖)`.
    pub worst_hessian: f64,
}

/// Analytic derivatives of every barrier in [`barrier_zoo`] against central
/// differences at `beliefs` random beliefs, one fresh zoo per belief.
pub fn gradient_suite(seed: u64, beliefs: usize) -> GradientSuite {
    let mut rng = rng(seed);
    let mut s = GradientSuite::default();
    let step = 1e-5;
    for _ in 0..beliefs {
        let zoo = barrier_zoo(&mut rng);
        let b = random_belief(&mut rng, 6);
        for h in &zoo {
            let e = h.evaluate(&b);
            // A kink near the belief makes finite differences straddle
            // branches.
            if e.nonsmooth || branch_changes_nearby(h, &b, 1e-3) {
                s.skipped_kinks += 1;
                continue;
            }
            s.checked += 1;
            let at = |x: &DVector<f64>| ftcbf::BeliefState::new(x.clone(), b.covariance.clone());
            let fd = central_gradient(|x| h.value(&at(x)), &b.estimate, step);
            let g_err = (&fd - &e.gradient).norm() / e.gradient.norm().max(1.0);
            s.worst_gradient = s.worst_gradient.max(g_err);

            let fd_h = central_jacobian(|x| h.evaluate(&at(x)).gradient, &b.estimate, step);
            let fd_h = (&fd_h + fd_h.transpose()) * 0.5;
            let h_err = (&fd_h - &e.hessian).norm() / e.hessian.norm().max(1.0);
            s.worst_hessian = s.worst_hessian.max(h_err);

            let n = b.dim();
            let dp = e.covariance_gradient.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
            let mut fd_p = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut hi = b.covariance.clone();
                    let mut lo = b.covariance.clone();
                    hi[(i, j)] += step;
                    lo[(i, j)] -= step;
                    let f = |p: DMatrix<f64>| h.value(&ftcbf::BeliefState::new(b.estimate.clone(), p));
                    fd_p[(i, j)] = (f(hi) - f(lo)) / (2.0 * step);
                }
            }
            let p_err = (&fd_p - &dp).norm() / dp.norm().max(1.0);
            s.worst_covariance = s.worst_covariance.max(p_err);
        }
    }
    s
}

fn branch_changes_nearby(h: &ftcbf::barrier::BarrierFn, b: &ftcbf::BeliefState, radius: f64) -> bool {
    use ftcbf::barrier::BarrierFn;
    let children = match h {
        BarrierFn::Min(ch) | BarrierFn::Max(ch) => ch,
        _ => return false,
    };
    // Gap between the attaining child and the runner-up, against how far
    // the values can move within `radius`.
    let mut vals: Vec<f64> = children.iter().map(|c| c.value(b)).collect();
    vals.sort_by(f64::total_cmp);
    let spread = if matches!(h, BarrierFn::Min(_)) { vals[1] - vals[0] } else { vals[vals.len() - 1] - vals[vals.len() - 2] };
    let slope: f64 = children.iter().map(|c| c.evaluate(b).gradient.norm() + 2.0).fold(0.0, f64::max);
    spread < 2.0 * slope * radius || children.iter().any(|c| branch_changes_nearby(c, b, radius))
}

/// Worst absolute deviation between the library's safety and reach rows
/// and a from-scratch rebuild of every term, over `instances` random
/// unicycle filters and every leaf of a fixed barrier family.
pub fn reconstruction_suite(seed: u64, instances: usize) -> (usize, f64) {
    use ftcbf::barrier::{
        eps_margin, gamma_constraint, omega_constraint, signed_abs, BarrierFn, BeliefDynamics, CustomBarrier, PointMap,
    };
    use ftcbf::ekf::EkfInstance;
    use ftcbf::sde::{wmr_plant, FaultPattern, WmrParams};
    use std::sync::Arc;

    let mut rng = rng(seed);
    let patterns = [vec![], vec![2], vec![4], vec![2, 4]];
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for _ in 0..instances {
        let d = rng.random_range(0.3..1.0);
        let proc: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.01..0.2));
        let sensor: [f64; 7] = std::array::from_fn(|_| rng.random_range(0.1..0.4));
        let model = wmr_plant(&WmrParams { offset: d, process_noise: proc, sensor_noise: sensor }).unwrap();
        let removed = patterns[rng.random_range(0..patterns.len())].clone();
        let x = DVector::from_fn(3, |i, _| if i == 2 { rng.random_range(-3.2..3.2) } else { rng.random_range(-3.0..3.0) });
        let l = gaussian_matrix(&mut rng, 3, 3) * 0.2;
        let p = &l * l.transpose() + DMatrix::identity(3, 3) * 0.005;
        let ekf = EkfInstance::new(&model, &FaultPattern::new(removed.clone()), x.clone(), p.clone(), 50).unwrap();
        let eps = rng.random_range(0.0..0.5);
        let dyn_ = BeliefDynamics::new(&ekf, eps);

        // Filter quantities from scratch.
        let (s, c) = x[2].sin_cos();
        let kept: Vec<usize> = (0..7).filter(|r| !removed.contains(r)).collect();
        #[rustfmt::skip]
        let h_full = DMatrix::from_row_slice(7, 3, &[
            1.0, 0.0, 0.0,  1.0, 0.0, 0.0,  0.0, 1.0, 0.0,  0.0, 1.0, 0.0,
            1.0, 0.0, -d * s,  0.0, 1.0, d * c,  0.0, 0.0, 1.0,
        ]);
        let obs = DMatrix::from_fn(kept.len(), 3, |r, col| h_full[(kept[r], col)]);
        let nu = DMatrix::from_fn(kept.len(), kept.len(), |r, col| if r == col { sensor[kept[r]] } else { 0.0 });
        let r_inv = (&nu * nu.transpose()).try_inverse().unwrap();
        let gain = &p * obs.transpose() * r_inv;
        let q = DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| proc[i] * proc[i]));
        let g = DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0]);
        let mut dg0 = DMatrix::zeros(3, 3);
        dg0[(0, 2)] = -s;
        dg0[(1, 2)] = c;
        let dgs = [dg0, DMatrix::zeros(3, 3)];
        let cov_drift = &q - &gain * &obs * &p;

        let center = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let radius = rng.random_range(0.5..2.0);
        let normal = {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [a.cos(), a.sin()]
        };
        let offset = rng.random_range(-2.0..2.0);
        let look = PointMap::LookAhead { base: 0, offset: d };
        let lip = (1.0 + d * d).sqrt();
        let pt = [x[0] + d * c, x[1] + d * s];
        let jac = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -d * s, 0.0, 1.0, d * c]);
        let curv = [-d * c, -d * s];

        // (barrier, value, gradient, hessian, ∂h/∂P, margin) by hand.
        type Leaf = (BarrierFn, f64, DVector<f64>, DMatrix<f64>, Option<DMatrix<f64>>, f64);
        let mut leaves: Vec<Leaf> = Vec::new();
        for sign in [1.0, -1.0] {
            let diff = [pt[0] - center[0], pt[1] - center[1]];
            let dvec = DVector::from_column_slice(&diff);
            let grad = jac.transpose() * &dvec * (2.0 * sign);
            let mut hess = jac.transpose() * &jac * 2.0;
            hess[(2, 2)] += 2.0 * (diff[0] * curv[0] + diff[1] * curv[1]);
            let e = lip * eps;
            let (h, bar) = if sign > 0.0 {
                (BarrierFn::ball_avoid(look.clone(), &center, radius), 2.0 * radius * e + e * e)
            } else {
                let bar = if e <= radius { 2.0 * radius * e - e * e } else { radius * radius };
                (BarrierFn::ball_reach(look.clone(), &center, radius), bar)
            };
            let value = sign * (diff[0] * diff[0] + diff[1] * diff[1] - radius * radius);
            leaves.push((h, value, grad, hess * sign, None, bar));
        }
        {
            let nvec = DVector::from_column_slice(&normal);
            let mut hess = DMatrix::zeros(3, 3);
            hess[(2, 2)] = normal[0] * curv[0] + normal[1] * curv[1];
            leaves.push((
                BarrierFn::halfspace(look.clone(), &normal, offset),
                normal[0] * pt[0] + normal[1] * pt[1] - offset,
                jac.transpose() * nvec,
                hess,
                None,
                lip * eps,
            ));
        }
        for sign in [1.0, -1.0] {
            let h = if sign > 0.0 { BarrierFn::trace_bound(0.9) } else { BarrierFn::trace_bound(0.9).negate() };
            leaves.push((h, sign * (0.9 - p.trace()), DVector::zeros(3), DMatrix::zeros(3, 3), Some(DMatrix::identity(3, 3) * -sign), 0.0));
        }
        {
            let e = WavyBarrier.evaluate(ekf.belief());
            leaves.push((BarrierFn::Custom(Arc::new(WavyBarrier)), e.value, e.gradient, e.hessian, e.covariance_gradient, 10.0 * eps));
        }

        for (h, value, grad, hess, dp, bar) in leaves {
            let margin = eps_margin(&h, eps).unwrap();
            let kn = &gain * &nu;
            let mut a = g.transpose() * &grad;
            let mut c0 = -eps * (grad.transpose() * &gain * &obs).norm() + 0.5 * (kn.transpose() * &hess * &kn).trace();
            if let Some(dp) = &dp {
                for (k, dg) in dgs.iter().enumerate() {
                    a[k] += dp.component_mul(&(dg * &p + &p * dg.transpose())).sum();
                }
                c0 += dp.component_mul(&cov_drift).sum();
            }
            let shifted = value - bar;
            let omega = omega_constraint(&dyn_, &h, &margin);
            let gamma = gamma_constraint(&dyn_, &h, &margin);
            let dev = [
                (&omega.normal - &a).amax(),
                (&gamma.normal - &a).amax(),
                (omega.offset - (-shifted - c0)).abs(),
                (gamma.offset - (-signed_abs(shifted) - c0)).abs(),
                (margin.bar - bar).abs(),
            ];
            worst = dev.iter().fold(worst, |w, v| w.max(*v));
            rows += 2;
        }
    }
    (rows, worst)
}

// ---------------------------------------------------------------- traces

/// Chain automaton over (a, b, obs): reach a then b, never obs.
pub fn chain_dra() -> (Dra, ftcbf::automata::AcceptingRun) {
    let props: Vec<String> = ["a", "b", "obs"].iter().map(|s| s.to_string()).collect();
    let dra = ftcbf::automata::build_sequencing_dra(&props, &[0, 1], &[(2, false)]).unwrap();
    let run = ftcbf::automata::select_accepting_run(&dra).unwrap();
    (dra, run)
}

/// s0 -p-> s1 -q-> s2 (accepting sink); `q` before `p` falls into s3,
/// which no pair avoids.
pub fn detour_dra() -> (Dra, ftcbf::automata::AcceptingRun) {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    #[rustfmt::skip]
    let transitions = vec![
        0, 1, 3, 3,
        1, 1, 2, 2,
        2, 2, 2, 2,
        3, 3, 3, 3,
    ];
    let pairs = vec![RabinPair { avoid: vec![], accept: vec![2] }];
    let dra = Dra::new(names(&["s0", "s1", "s2", "s3"]), names(&["p", "q"]), transitions, 0, pairs).unwrap();
    let run = ftcbf::automata::select_accepting_run(&dra).unwrap();
    (dra, run)
}

pub type TraceCase = (Dra, ftcbf::automata::AcceptingRun, Vec<u32>, ftcbf::automata::Verdict);

/// Twenty letter sequences with verdicts worked out by hand.
pub fn trace_cases() -> Vec<TraceCase> {
    use ftcbf::automata::{Verdict, ViolationReason};
    const A: u32 = 1;
    const B: u32 = 2;
    const OBS: u32 = 4;
    const P: u32 = 1;
    const Q: u32 = 2;
    let sat = |step| Verdict::Satisfied { step };
    let safety = |step| Verdict::Violated { step, reason: ViolationReason::Safety };
    let deviation = |step| Verdict::Violated { step, reason: ViolationReason::Deviation };
    let open = |horizon| Verdict::Inconclusive { horizon };

    let mut out = Vec::new();
    let (dra, run) = chain_dra();
    for (letters, want) in [
        (vec![], open(0)),
        (vec![0], open(1)),
        (vec![A], open(1)),
        (vec![A, B], sat(1)),
        (vec![A | B], sat(0)),
        (vec![0, OBS], safety(1)),
        (vec![B, A], open(2)),
        (vec![B, A, B], sat(2)),
        (vec![A, OBS | B], safety(1)),
        (vec![0, 0, 0, A, 0, 0, B], sat(6)),
        (vec![A, B, OBS], sat(1)),
        (vec![OBS], safety(0)),
        (vec![A | OBS], safety(0)),
        (vec![A, A, A, A], open(4)),
    ] {
        out.push((dra.clone(), run.clone(), letters, want));
    }
    let (dra, run) = detour_dra();
    for (letters, want) in [
        (vec![Q], deviation(0)),
        (vec![P, P, Q], sat(2)),
        (vec![P, P | Q], sat(1)),
        (vec![0, P | Q], deviation(1)),
        (vec![P, 0, 0], open(3)),
    ] {
        out.push((dra.clone(), run.clone(), letters, want));
    }
    // The initial state already lies on the cycle.
    let dra = Dra::new(vec!["only".into()], vec!["p".into()], vec![0, 0], 0, vec![RabinPair { avoid: vec![], accept: vec![0] }]).unwrap();
    let run = ftcbf::automata::select_accepting_run(&dra).unwrap();
    out.push((dra, run, vec![], sat(0)));
    out
}

/// Checks the case-study sub-tasks against letter sets derived by hand:
/// propositions dest1a, dest1b, dest2, obs, tight in bit order; a letter
/// is safe when obs is clear and tight holds.
pub fn check_case_study_letters(scenario: &ftcbf::harness::Scenario) -> Result<usize, String> {
    let run = ftcbf::automata::select_accepting_run(&scenario.dra).map_err(|e| e.to_string())?;
    let tasks = scenario.subtasks(&run).map_err(|e| e.to_string())?;
    if tasks.len() != 3 {
        return Err(format!("{} sub-tasks", tasks.len()));
    }
    let props: Vec<&str> = scenario.dra.propositions().iter().map(|p| scenario.map.predicate_of(p).unwrap_or("?")).collect();
    if props != ["dest1a", "dest1b", "dest2", "obs", "tight"] {
        return Err(format!("propositions {props:?}"));
    }
    let safe = |l: u32| l & 8 == 0 && l & 16 != 0;
    let with = |pred: &dyn Fn(u32) -> bool| (0..32).filter(|&l| pred(l)).collect::<Vec<u32>>();
    let sorted = |v: &[u32]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    };
    for (j, task) in tasks.iter().enumerate() {
        let goal = 1u32 << j;
        let next = if j < 2 { with(&|l| safe(l) && l & (goal << 1) == 0) } else { with(&safe) };
        if sorted(&task.stay_letters) != with(&|l| safe(l) && l & goal == 0)
            || sorted(&task.advance_letters) != with(&|l| safe(l) && l & goal != 0)
            || sorted(&task.next_stay_letters) != next
        {
            return Err(format!("sub-task {j} letters differ"));
        }
        if !task.warnings.is_empty() {
            return Err(format!("sub-task {j} warnings {:?}", task.warnings));
        }
    }
    Ok(tasks.len())
}
