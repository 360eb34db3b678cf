//! Phase-1 linear program deciding whether `{u : Au ≥ b}` is nonempty.
//!
//! Solves `min t  s.t.  Au + t·1 ≥ b, t ≥ 0` with a dense tableau and
//! Bland's rule, so pivoting is deterministic and cannot cycle.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    /// `violation` is the smallest achievable worst-row shortfall;
    /// `certificate` satisfies `y ≥ 0`, `Aᵀy = 0`, `yᵀb = violation`.
    Infeasible { violation: f64, certificate: DVector<f64> },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

pub fn feasibility(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Feasibility {
    let k = a.nrows();
    let p = a.ncols();
    if k == 0 || b.iter().all(|v| *v <= tol) {
        return Feasibility::Feasible(DVector::zeros(p));
    }
    let worst = (0..k).fold(0, |best, i| if b[i] > b[best] { i } else { best });

    // Columns: u⁺ (p), u⁻ (p), t, s (k), rhs.
    let t_col = 2 * p;
    let s_col = 2 * p + 1;
    let cols = s_col + k;
    let mut tab = DMatrix::zeros(k, cols + 1);
    for i in 0..k {
        for j in 0..p {
            tab[(i, j)] = a[(i, j)];
            tab[(i, p + j)] = -a[(i, j)];
        }
        tab[(i, t_col)] = 1.0;
        tab[(i, s_col + i)] = -1.0;
        tab[(i, cols)] = b[i];
    }
    let mut basis = vec![0; k];
    pivot(&mut tab, worst, t_col);
    basis[worst] = t_col;
    for i in (0..k).filter(|&i| i != worst) {
        pivot(&mut tab, i, s_col + i);
        basis[i] = s_col + i;
    }

    let cost = |j: usize| if j == t_col { 1.0 } else { 0.0 };
    let reduced = |tab: &DMatrix<f64>, basis: &[usize], j: usize| -> f64 {
        cost(j) - (0..k).map(|i| cost(basis[i]) * tab[(i, j)]).sum::<f64>()
    };

    let cap = 50 * (cols + k).max(10);
    for _ in 0..cap {
        let Some(enter) = (0..cols).find(|&j| !basis.contains(&j) && reduced(&tab, &basis, j) < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..k {
            let coef = tab[(i, enter)];
            if coef > PIVOT_EPS {
                let ratio = tab[(i, cols)] / coef;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - PIVOT_EPS || (ratio <= lr + PIVOT_EPS && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // The objective is bounded below by zero, so an entering column
        // always has a blocking row.
        let Some((row, _)) = leave else { break };
        pivot(&mut tab, row, enter);
        basis[row] = enter;
    }

    let mut x = vec![0.0; cols];
    for i in 0..k {
        x[basis[i]] = tab[(i, cols)];
    }
    let t = x[t_col];
    if t <= tol {
        let u = DVector::from_fn(p, |j, _| x[j] - x[p + j]);
        return Feasibility::Feasible(u);
    }
    let certificate = DVector::from_fn(k, |i, _| reduced(&tab, &basis, s_col + i).max(0.0));
    Feasibility::Infeasible { violation: t, certificate }
}

fn pivot(tab: &mut DMatrix<f64>, row: usize, col: usize) {
    let scale = tab[(row, col)];
    let width = tab.ncols();
    for j in 0..width {
        tab[(row, j)] /= scale;
    }
    for i in 0..tab.nrows() {
        if i == row {
            continue;
        }
        let factor = tab[(i, col)];
        if factor != 0.0 {
            for j in 0..width {
                let v = tab[(row, j)];
                tab[(i, j)] -= factor * v;
            }
        }
    }
}
