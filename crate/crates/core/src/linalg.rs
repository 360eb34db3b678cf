//! Small dense helpers shared by the filter and the synthesis code.

use nalgebra::{DMatrix, DVector};

/// `(P + Pᵀ) / 2`, exactly symmetric in floating point.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Clamp eigenvalues below `-floor` to zero. Cheap when `P` is already
/// (numerically) positive semidefinite: only a Cholesky attempt is made.
pub fn clip_psd(p: &mut DMatrix<f64>, floor: f64) -> bool {
    let n = p.nrows();
    let shifted = &*p + DMatrix::identity(n, n) * floor;
    if shifted.cholesky().is_some() {
        return false;
    }
    let eig = p.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    *p = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(p);
    true
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| v[rows[i]])
}

pub fn select_block(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| m[(rows[i], rows[j])])
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_is_exact() {
        let mut p = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.3, 0.2, 2.0, 0.7, 0.30001, 0.69, 3.0]);
        symmetrize(&mut p);
        assert_eq!(p, p.transpose());
    }

    #[test]
    fn clip_psd_removes_negative_directions() {
        let mut p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(clip_psd(&mut p, 1e-10));
        assert!(min_eigenvalue(&p) >= -1e-12);
        let mut q = DMatrix::identity(2, 2);
        assert!(!clip_psd(&mut q, 1e-10));
    }

    #[test]
    fn block_diagonal_layout() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(2, 1, 2.0);
        let m = block_diagonal(&[a, b]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(2, 2)], 2.0);
        assert_eq!(m[(1, 0)], 0.0);
    }
}
