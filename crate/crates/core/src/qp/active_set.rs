//! Dual active-set method for strictly convex QPs.
//!
//! Starts from the unconstrained minimiser `u = 0` and adds violated
//! constraints one at a time, keeping dual feasibility throughout. Empty
//! feasible sets are screened out first by the phase-1 LP, whose dual is a
//! cleaner infeasibility witness than a stalled dual step. The
//! factorisations are rebuilt each iteration, which is cheap at the sizes
//! this crate needs (a handful of inputs, a dozen rows).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::simplex::{feasibility, Feasibility};
use super::{QpError, QpProblem, QpSolution, SolveStatus, DEGENERATE_ROW};

pub fn solve(problem: &QpProblem, tol: f64) -> Result<QpSolution, QpError> {
    let p = problem.num_inputs();
    let k = problem.num_constraints();
    let g = &problem.cost * 2.0;
    let g_chol = g.clone().cholesky().ok_or_else(|| QpError::InvalidProblem("cost matrix is not positive definite".into()))?;
    let g_inv = g_chol.inverse();

    let mut rows = Vec::with_capacity(k);
    for j in 0..k {
        if problem.a.row(j).norm() < DEGENERATE_ROW {
            if problem.b[j] > tol {
                let mut cert = DVector::zeros(k);
                cert[j] = 1.0;
                return Ok(QpSolution {
                    status: SolveStatus::Infeasible,
                    u: DVector::zeros(p),
                    active: Vec::new(),
                    multipliers: DVector::zeros(k),
                    certificate: Some(cert),
                });
            }
        } else {
            rows.push(j);
        }
    }

    if let Feasibility::Infeasible { certificate, .. } = feasibility(&problem.a, &problem.b, tol) {
        return Ok(QpSolution {
            status: SolveStatus::Infeasible,
            u: DVector::zeros(p),
            active: Vec::new(),
            multipliers: DVector::zeros(k),
            certificate: Some(certificate),
        });
    }

    let normal = |j: usize| -> DVector<f64> { problem.a.row(j).transpose() };
    let slack = |u: &DVector<f64>, j: usize| -> f64 { problem.a.row(j).dot(&u.transpose()) - problem.b[j] };

    let mut u = DVector::zeros(p);
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let cap = 100 * k.max(1);
    let mut iterations = 0;

    loop {
        // Most violated inactive row, lowest index on ties.
        let mut chosen: Option<(usize, f64)> = None;
        for &j in &rows {
            if active.contains(&j) {
                continue;
            }
            let s = slack(&u, j);
            if s < -tol && chosen.is_none_or(|(_, best)| s < best) {
                chosen = Some((j, s));
            }
        }
        let Some((cand, _)) = chosen else {
            return Ok(finish(problem, &g_inv, u, active, lambda, tol));
        };
        let n_p = normal(cand);
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > cap {
                return Err(QpError::MaxIterations { iterations: cap, last: u.iter().copied().collect() });
            }
            let (z, r) = directions(problem, &g_inv, &active, &n_p);
            let curvature = z.dot(&n_p);
            let z_is_zero = z.amax() <= 1e-12 * n_p.amax().max(1.0) || curvature <= 1e-14 * n_p.norm_squared();

            // Largest dual step before an active multiplier hits zero.
            let mut partial: Option<(usize, f64)> = None;
            for (idx, &rj) in r.iter().enumerate() {
                if rj > 0.0 {
                    let t = lambda[idx] / rj;
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((idx, t));
                    }
                }
            }

            if z_is_zero {
                match partial {
                    None => {
                        let mut cert = DVector::zeros(k);
                        cert[cand] = 1.0;
                        for (idx, &j) in active.iter().enumerate() {
                            cert[j] = -r[idx];
                        }
                        let mut multipliers = DVector::zeros(k);
                        for (idx, &j) in active.iter().enumerate() {
                            multipliers[j] = lambda[idx];
                        }
                        return Ok(QpSolution {
                            status: SolveStatus::Infeasible,
                            u,
                            active,
                            multipliers,
                            certificate: Some(cert),
                        });
                    }
                    Some((idx, t)) => {
                        for (l, rj) in lambda.iter_mut().zip(r.iter()) {
                            *l -= t * rj;
                        }
                        lambda_p += t;
                        active.remove(idx);
                        lambda.remove(idx);
                        continue;
                    }
                }
            }

            let full = -slack(&u, cand) / curvature;
            let step = match partial {
                Some((_, t)) if t < full => t,
                _ => full,
            };
            u += &z * step;
            for (l, rj) in lambda.iter_mut().zip(r.iter()) {
                *l -= step * rj;
            }
            lambda_p += step;
            if step == full {
                active.push(cand);
                lambda.push(lambda_p);
                break;
            }
            let (idx, _) = partial.expect("partial step taken");
            active.remove(idx);
            lambda.remove(idx);
        }
    }
}

/// Primal direction `z` in the null space of the active normals and the
/// multiplier sensitivities `r` for adding normal `n_p`.
fn directions(
    problem: &QpProblem,
    g_inv: &DMatrix<f64>,
    active: &[usize],
    n_p: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let gn = g_inv * n_p;
    if active.is_empty() {
        return (gn, DVector::zeros(0));
    }
    let n = active_normals(problem, active);
    let gn_act = g_inv * &n;
    let schur = n.transpose() * &gn_act;
    let r = match Cholesky::<f64, Dyn>::new(schur.clone()) {
        Some(ch) => ch.solve(&(n.transpose() * &gn)),
        None => schur.svd(true, true).solve(&(n.transpose() * &gn), 1e-14).unwrap_or_else(|_| DVector::zeros(active.len())),
    };
    let z = gn - gn_act * &r;
    (z, r)
}

fn active_normals(problem: &QpProblem, active: &[usize]) -> DMatrix<f64> {
    let p = problem.num_inputs();
    DMatrix::from_fn(p, active.len(), |r, c| problem.a[(active[c], r)])
}

/// Re-solves the equality-constrained KKT system on the final active set to
/// tighten residuals, keeping the iterate if that would break dual
/// feasibility.
fn finish(
    problem: &QpProblem,
    g_inv: &DMatrix<f64>,
    u: DVector<f64>,
    active: Vec<usize>,
    lambda: Vec<f64>,
    tol: f64,
) -> QpSolution {
    let k = problem.num_constraints();
    let mut multipliers = DVector::zeros(k);
    let mut u_out = u;
    if !active.is_empty() {
        let n = active_normals(problem, &active);
        let b_act = DVector::from_iterator(active.len(), active.iter().map(|&j| problem.b[j]));
        let schur = n.transpose() * g_inv * &n;
        if let Some(ch) = schur.cholesky() {
            let lam = ch.solve(&b_act);
            if lam.iter().all(|v| *v >= -tol) {
                let polished = g_inv * &n * &lam;
                for (idx, &j) in active.iter().enumerate() {
                    multipliers[j] = lam[idx].max(0.0);
                }
                u_out = polished;
                return QpSolution { status: SolveStatus::Optimal, u: u_out, active, multipliers, certificate: None };
            }
        }
        for (idx, &j) in active.iter().enumerate() {
            multipliers[j] = lambda[idx];
        }
    }
    QpSolution { status: SolveStatus::Optimal, u: u_out, active, multipliers, certificate: None }
}
