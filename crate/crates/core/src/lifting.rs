//! The lifted measurement operator X(Z)_n = e_nᵀ Z b_n and its adjoint.
//!
//! Pairing convention: ⟨A, C⟩ = Tr(Cᴴ A), conjugate on the second argument.
//! Under it, ⟨X(Z), p⟩ = ⟨Z, X*(p)⟩ with X*(p) = Σ_n p_n e_n b_nᴴ.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::SubspaceModel;
use crate::C64;

/// X(Z): entry n is Σ_i Z_{n,i} B_{n,i} (no conjugation).
pub fn lift_forward(z: &DMatrix<C64>, subspace: &SubspaceModel) -> Result<DVector<C64>> {
    let b = subspace.matrix();
    if z.shape() != b.shape() {
        return Err(Error::domain(format!("Z is {:?} but the subspace is {:?}", z.shape(), b.shape())));
    }
    Ok(DVector::from_iterator(
        z.nrows(),
        z.row_iter().zip(b.row_iter()).map(|(zr, br)| zr.iter().zip(br.iter()).map(|(a, c)| a * c).sum()),
    ))
}

/// X*(p): entry (n, i) is p_n conj(B_{n,i}).
pub fn lift_adjoint(p: &DVector<C64>, subspace: &SubspaceModel) -> Result<DMatrix<C64>> {
    let b = subspace.matrix();
    if p.len() != b.nrows() {
        return Err(Error::domain(format!("p has length {} but the subspace has {} rows", p.len(), b.nrows())));
    }
    Ok(DMatrix::from_fn(b.nrows(), b.ncols(), |n, i| p[n] * b[(n, i)].conj()))
}

/// ⟨A, C⟩ = Tr(Cᴴ A) = Σ conj(C_ij) A_ij.
pub fn inner(a: &DMatrix<C64>, c: &DMatrix<C64>) -> C64 {
    a.iter().zip(c.iter()).map(|(x, y)| y.conj() * x).sum()
}

/// Materialized X as an N × (NL) sparse matrix acting on row-major vec(Z).
/// Meant for debugging and cross-checks at small N.
#[derive(Debug, Clone)]
pub struct LiftingMatrix {
    pub rows: usize,
    pub cols: usize,
    /// (row, col, value) triplets.
    pub entries: Vec<(usize, usize, C64)>,
}

impl LiftingMatrix {
    pub fn new(subspace: &SubspaceModel) -> Self {
        let (n, l) = subspace.matrix().shape();
        let entries = (0..n)
            .flat_map(|r| (0..l).map(move |i| (r, i)))
            .map(|(r, i)| (r, r * l + i, subspace.matrix()[(r, i)]))
            .collect();
        LiftingMatrix { rows: n, cols: n * l, entries }
    }

    pub fn apply(&self, vec_z: &[C64]) -> Result<DVector<C64>> {
        if vec_z.len() != self.cols {
            return Err(Error::domain("vec(Z) length mismatch"));
        }
        let mut out = DVector::zeros(self.rows);
        for &(r, c, v) in &self.entries {
            out[r] += v * vec_z[c];
        }
        Ok(out)
    }

    /// Conjugate transpose applied to p, returned as row-major vec(Z).
    pub fn apply_adjoint(&self, p: &DVector<C64>) -> Result<Vec<C64>> {
        if p.len() != self.rows {
            return Err(Error::domain("p length mismatch"));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for &(r, c, v) in &self.entries {
            out[c] += v.conj() * p[r];
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Row-major vec(Z).
pub fn vectorize(z: &DMatrix<C64>) -> Vec<C64> {
    z.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}
