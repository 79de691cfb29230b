use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::trigpoly::TrigPoly;
use crate::C64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualNormOptions {
    pub grid_min: usize,
    /// Grid points per sample; the grid has max(grid_min, grid_factor·N) points.
    pub grid_factor: usize,
    pub newton_steps: usize,
    /// Number of top grid maxima polished by Newton steps.
    pub candidates: usize,
}

impl Default for DualNormOptions {
    fn default() -> Self {
        DualNormOptions { grid_min: 4096, grid_factor: 32, newton_steps: 3, candidates: 8 }
    }
}

/// ‖Y‖*_A = sup_τ ‖Yᴴc(τ)‖₂, returned with its maximizer.
///
/// Yᴴc(τ) is a trigonometric polynomial whose frequencies span N − 1, so
/// ‖Yᴴc(τ)‖ is Lipschitz with constant π(N − 1)·sup (Bernstein). A grid of G
/// points leaves every τ within 1/(2G) of a sample, hence
/// sup ≤ grid_max / (1 − π(N − 1)/(2G)); at G ≥ 32N the grid maximum alone is
/// within 5% and the Newton polish closes the rest. The norm does not depend on
/// which index set labels the rows, so rows are taken as n = 0..N−1.
pub fn dual_atomic_norm(y: &DMatrix<C64>, opts: &DualNormOptions) -> (f64, f64) {
    let n = y.nrows();
    if n == 0 || y.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return (0.0, 0.0);
    }
    let scale = 1.0 / (n as f64).sqrt();
    let poly = TrigPoly::new(0, y.map(|v| v.conj() * scale));
    peak_of(&poly, opts, n)
}

pub(crate) fn peak_of(poly: &TrigPoly, opts: &DualNormOptions, n: usize) -> (f64, f64) {
    let g = opts.grid_min.max(opts.grid_factor * n).max(1);
    let norms = poly.grid_norms(g);
    let mut peaks = TrigPoly::local_maxima(&norms);
    if peaks.is_empty() {
        peaks.push(norms.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0));
    }
    peaks.sort_by(|a, b| norms[*b].total_cmp(&norms[*a]));
    peaks.truncate(opts.candidates.max(1));
    let step = 1.0 / g as f64;
    let mut best = (norms[peaks[0]], peaks[0] as f64 * step);
    for &i in &peaks {
        let (t, v) = poly.refine_peak(i as f64 * step, opts.newton_steps, step, 1e-14);
        if v > best.0 {
            best = (v, t);
        }
    }
    (best.0, best.1.rem_euclid(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::{steering_vector, wrap_distance, Indexing};
    use rand::Rng;

    #[test]
    fn zero_matrix() {
        assert_eq!(dual_atomic_norm(&DMatrix::zeros(9, 2), &DualNormOptions::default()), (0.0, 0.0));
    }

    #[test]
    fn single_atom_peaks_at_its_delay() {
        for (n, ix) in [(17, Indexing::Symmetric), (16, Indexing::Shifted)] {
            let tau0 = 0.61803;
            let c = steering_vector(tau0, n, ix).unwrap();
            let u = DMatrix::from_row_slice(1, 2, &[C64::new(0.6, 0.2), C64::new(-0.3, 0.5)]);
            let y = &c * u.conjugate();
            let (v, t) = dual_atomic_norm(&y, &DualNormOptions::default());
            assert!((v - u.norm()).abs() < 1e-12, "{v}");
            assert!(wrap_distance(t, tau0) < 1e-8);
        }
    }

    #[test]
    fn matches_fine_grid_oracle() {
        let mut rng = rng_from_seed(42);
        for _ in 0..3 {
            let y = DMatrix::from_fn(17, 2, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let (v, _) = dual_atomic_norm(&y, &DualNormOptions::default());
            let poly = TrigPoly::new(0, y.map(|v| v.conj() / 17f64.sqrt()));
            let brute = poly.grid_norms(1 << 20).into_iter().fold(0.0, f64::max);
            assert!(v >= brute - 1e-12);
            assert!((v - brute).abs() < 1e-6, "{v} {brute}");
        }
    }

    #[test]
    fn positively_homogeneous() {
        let mut rng = rng_from_seed(3);
        let y = DMatrix::from_fn(12, 3, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let o = DualNormOptions::default();
        let a = dual_atomic_norm(&y, &o).0;
        let b = dual_atomic_norm(&(&y * C64::new(2.0, 0.0)), &o).0;
        assert!((b - 2.0 * a).abs() < 1e-12);
    }
}
