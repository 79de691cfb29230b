//! Projection onto the Hermitian PSD cone via a dense eigendecomposition.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};
use nalgebra::DMatrix;

use crate::dense::to_faer;
use crate::error::{Error, Result};
use crate::C64;

/// Nearest PSD matrix in Frobenius norm. Only the lower triangle of `v` is read.
pub(crate) fn project_psd(v: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let d = v.nrows();
    let a = to_faer(v);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals: Vec<f64> = (0..d).map(|i| s[i].re).collect();

    // Rebuild from whichever eigenvalue sign class is smaller:
    // P = Σ_{λ>0} λ uuᴴ, or P = V + Σ_{λ<0} |λ| uuᴴ.
    let pos: Vec<usize> = (0..d).filter(|&i| vals[i] > 0.0).collect();
    let neg: Vec<usize> = (0..d).filter(|&i| vals[i] < 0.0).collect();
    let (sel, from_positive) = if pos.len() <= neg.len() { (pos, true) } else { (neg, false) };
    let mut out = if from_positive { DMatrix::zeros(d, d) } else { hermitian_from_lower(v) };
    if sel.is_empty() {
        return Ok(out);
    }
    let f = Mat::<C64>::from_fn(d, sel.len(), |i, c| u[(i, sel[c])] * vals[sel[c]].abs().sqrt());
    let mut prod = Mat::<C64>::zeros(d, d);
    matmul(prod.as_mut(), Accum::Replace, f.as_ref(), f.adjoint(), C64::new(1.0, 0.0), Par::Seq);
    for j in 0..d {
        let col = prod.col_as_slice(j);
        for i in 0..d {
            out[(i, j)] += col[i];
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a Hermitian matrix (lower triangle read).
pub(crate) fn min_eigenvalue(v: &DMatrix<C64>) -> Result<f64> {
    let vals = to_faer(v)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigenvalues failed: {e:?}")))?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

fn hermitian_from_lower(v: &DMatrix<C64>) -> DMatrix<C64> {
    let d = v.nrows();
    DMatrix::from_fn(d, d, |i, j| if i >= j { v[(i, j)] } else { v[(j, i)].conj() })
}
