//! Dense complex decompositions backed by faer.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

pub(crate) fn to_faer(v: &DMatrix<C64>) -> Mat<C64> {
    Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)])
}

/// Thin SVD A = U diag(s) Vᴴ with s sorted in decreasing order.
pub struct Svd {
    pub u: DMatrix<C64>,
    pub s: Vec<f64>,
    pub v: DMatrix<C64>,
}

impl Svd {
    /// Minimum-norm least-squares solution, discarding singular values at or
    /// below `rcond·s_max`.
    pub fn solve(&self, b: &DVector<C64>, rcond: f64) -> DVector<C64> {
        let smax = self.s.first().copied().unwrap_or(0.0);
        let mut coef = self.u.adjoint() * b;
        for (c, &s) in coef.iter_mut().zip(&self.s) {
            *c = if s > rcond * smax { *c / s } else { C64::new(0.0, 0.0) };
        }
        &self.v * coef
    }

    pub fn condition(&self) -> f64 {
        match (self.s.first(), self.s.last()) {
            (Some(&a), Some(&b)) if b > 0.0 => a / b,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        }
    }
}

pub fn svd(a: &DMatrix<C64>) -> Result<Svd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd { u: DMatrix::zeros(m, 0), s: Vec::new(), v: DMatrix::zeros(n, 0) });
    }
    let f = to_faer(a).thin_svd().map_err(|e| Error::Degenerate(format!("SVD failed: {e:?}")))?;
    let s_diag = f.S().column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    let sv: Vec<f64> = (0..k).map(|i| s_diag[i].re).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));
    let (fu, fv) = (f.U(), f.V());
    Ok(Svd {
        u: DMatrix::from_fn(m, k, |i, c| fu[(i, order[c])]),
        s: order.iter().map(|&i| sv[i]).collect(),
        v: DMatrix::from_fn(n, k, |i, c| fv[(i, order[c])]),
    })
}

/// Eigenvalues of a Hermitian matrix in increasing order; the lower triangle
/// is read.
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Result<Vec<f64>> {
    let mut vals = to_faer(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigenvalues failed: {e:?}")))?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::draw_noise;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rank_one_recomposes() {
        // A product that trips up some complex SVD implementations.
        let x = draw_noise(20, 1.0, 7905);
        let h = draw_noise(5, 1.0, 7906);
        let z = &x * h.transpose();
        let d = svd(&z).unwrap();
        let r1 = d.u.column(0) * d.v.column(0).adjoint() * C64::new(d.s[0], 0.0);
        assert!((r1 - &z).norm() < 1e-13 * z.norm());
        assert!((d.s[0] - x.norm() * h.norm()).abs() < 1e-12 * d.s[0]);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = rng_from_seed(2);
        let a = DMatrix::from_fn(9, 3, |_, _| C64::new(rng.random::<f64>(), rng.random::<f64>()));
        let b = draw_noise(9, 1.0, 3);
        let x = svd(&a).unwrap().solve(&b, 1e-14);
        let normal = (a.adjoint() * &a).lu().solve(&(a.adjoint() * &b)).unwrap();
        assert!((x - normal).norm() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn recomposition(seed in 0u64..100_000, m in 1usize..12, n in 1usize..12) {
            let mut rng = rng_from_seed(seed);
            let a = DMatrix::from_fn(m, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let d = svd(&a).unwrap();
            let s = DMatrix::from_diagonal(&DVector::from_iterator(d.s.len(), d.s.iter().map(|&v| C64::new(v, 0.0))));
            prop_assert!((&d.u * s * d.v.adjoint() - &a).norm() < 1e-12 * a.norm().max(1.0));
            prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn eigenvalues_of_gram(seed in 0u64..100_000, n in 1usize..10) {
            let mut rng = rng_from_seed(seed);
            let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let g = a.adjoint() * &a;
            let ev = hermitian_eigenvalues(&g).unwrap();
            let sv = svd(&a).unwrap().s;
            for (e, s) in ev.iter().rev().zip(&sv) {
                prop_assert!((e - s * s).abs() < 1e-12 * (1.0 + s * s));
            }
        }
    }
}
