use nalgebra::{DMatrix, DVector};

use super::{barrier_rows, BarrierError, BeliefDynamics, ConstraintKind, SynthesisParams};
use crate::automata::SubTask;
use crate::ekf::{BeliefState, EkfBank};
use crate::qp::{feasibility, Feasibility};

/// Strict inequalities are checked as `≥` this margin.
pub const TRANSVERSALITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Transversality {
    /// An input increasing every retained barrier.
    Ok(DVector<f64>),
    /// No common increasing direction at these beliefs.
    Violated { patterns: Vec<usize>, beliefs: Vec<BeliefState> },
}

/// Whether some input strictly increases, to first order, the safety and
/// goal barriers of every pattern in `retained`, covariance terms included.
pub fn transversality_check(
    bank: &EkfBank,
    subtask: &SubTask,
    retained: &[usize],
    params: &SynthesisParams,
) -> Result<Transversality, BarrierError> {
    let p = params.cost.nrows();
    let mut normals: Vec<DVector<f64>> = Vec::new();
    for &i in retained {
        let dynamics = BeliefDynamics::new(bank.filter(i), params.eps[i]);
        for kind in [ConstraintKind::Safety, ConstraintKind::Reach] {
            let h = if kind == ConstraintKind::Safety { &subtask.safety } else { &subtask.goal };
            normals.extend(barrier_rows(&dynamics, h, kind, i, subtask.index)?.into_iter().map(|r| r.normal));
        }
    }
    Ok(transversal_direction(&normals, p).map_or_else(
        || Transversality::Violated {
            patterns: retained.to_vec(),
            beliefs: retained.iter().map(|&i| bank.belief(i).clone()).collect(),
        },
        Transversality::Ok,
    ))
}

/// Some `u` with `aᵀu ≥ margin` for every listed normal, if one exists.
pub(crate) fn transversal_direction(normals: &[DVector<f64>], p: usize) -> Option<DVector<f64>> {
    let a = DMatrix::from_fn(normals.len(), p, |r, c| normals[r][c]);
    let b = DVector::from_element(normals.len(), TRANSVERSALITY_MARGIN);
    match feasibility(&a, &b, 1e-12) {
        Feasibility::Feasible(u) => Some(u),
        Feasibility::Infeasible { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn single_nonzero_row() {
        assert!(transversal_direction(&[dvector![0.0, 2.0]], 2).is_some());
    }

    #[test]
    fn antipodal_rows() {
        assert!(transversal_direction(&[dvector![1.0, -1.0], dvector![-1.0, 1.0]], 2).is_none());
    }
}
