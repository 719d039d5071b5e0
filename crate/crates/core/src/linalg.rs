//! Small dense helpers built on nalgebra's Cholesky factorisation.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Cholesky factor of a symmetric matrix, or `None` when it is not positive definite.
pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    // nalgebra accepts tiny or denormal pivots; treat those as failures too
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] > 1e-150) || !l[(i, i)].is_finite()) {
        return None;
    }
    Some(chol)
}

pub(crate) fn logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// `(log det M, M^{-1})` for a positive definite `M`.
pub(crate) fn logdet_inverse(m: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = cholesky(m)?;
    let ld = logdet(&chol);
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some((ld, inv))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// `tr(A B)` for symmetric matrices.
pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
