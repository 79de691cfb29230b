//! Spike localization from the dual polynomial, rank-one factorization of the
//! lifted solution, amplitude fitting and scoring against ground truth.
//!
//! The dual polynomial is Q(τ) = X*(p)ᴴc(τ) = (1/√N) Σ_n conj(p_n) b_n e^{−j2πnτ}.
//! Spikes sit where ‖Q(τ)‖₂ touches 1.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use pathfinding::prelude::{kuhn_munkres_min, Matrix};
use serde::{Deserialize, Serialize};

use crate::cjson;
use crate::dense;
use crate::error::{Error, Result};
use crate::signal::{wrap_distance, Indexing, SpikeSignal, SubspaceModel};
use crate::trigpoly::TrigPoly;
use crate::C64;

/// Q as a trigonometric polynomial over the instance grid indices.
pub fn dual_polynomial(p: &DVector<C64>, subspace: &SubspaceModel, indexing: Indexing) -> Result<TrigPoly> {
    let (n, l) = (subspace.n(), subspace.l());
    if p.len() != n {
        return Err(Error::domain(format!("p has length {} but N = {n}", p.len())));
    }
    indexing.validate(n)?;
    let b = subspace.matrix();
    let s = 1.0 / (n as f64).sqrt();
    let coeffs = DMatrix::from_fn(n, l, |r, i| p[r].conj() * b[(r, i)] * s);
    Ok(TrigPoly::new(indexing.first_index(n), coeffs))
}

/// Q(τ) and its τ-derivatives up to `order`, for each τ in `taus`.
pub fn dual_polynomial_eval(
    p: &DVector<C64>,
    subspace: &SubspaceModel,
    indexing: Indexing,
    taus: &[f64],
    order: usize,
) -> Result<Vec<Vec<DVector<C64>>>> {
    let q = dual_polynomial(p, subspace, indexing)?;
    Ok(taus.iter().map(|&t| q.eval_derivs(t, order)).collect())
}

/// (τ, ‖Q(τ)‖₂) on a uniform grid, for plotting.
pub fn dual_polynomial_curve(
    p: &DVector<C64>,
    subspace: &SubspaceModel,
    indexing: Indexing,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let q = dual_polynomial(p, subspace, indexing)?;
    Ok(q.grid_norms(points).into_iter().enumerate().map(|(i, v)| (i as f64 / points as f64, v)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeOptions {
    /// Grid points per sample.
    pub grid_factor: usize,
    pub newton_steps: usize,
    pub newton_tol: f64,
    pub peak_tol_noiseless: f64,
    pub peak_tol_noisy: f64,
    /// Peaks closer than cluster_radius_factor / N are merged.
    pub cluster_radius_factor: f64,
    /// Dual-feasibility slack; a peak above 1 + 10·tol_dual raises a warning.
    pub tol_dual: f64,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions {
            grid_factor: 16,
            newton_steps: 5,
            newton_tol: 1e-12,
            peak_tol_noiseless: 1e-4,
            peak_tol_noisy: 1e-2,
            cluster_radius_factor: 0.25,
            tol_dual: 1e-4,
        }
    }
}

impl LocalizeOptions {
    pub fn peak_tol(&self, noisy: bool) -> f64 {
        if noisy {
            self.peak_tol_noisy
        } else {
            self.peak_tol_noiseless
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Peaks {
    /// Sorted ascending in [0, 1).
    pub delays: Vec<f64>,
    pub norms: Vec<f64>,
    /// Largest refined ‖Q‖ over all local maxima, above threshold or not.
    pub max_norm: f64,
    pub warnings: Vec<String>,
}

impl Peaks {
    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Local maxima of ‖Q(τ)‖₂ with value ≥ 1 − peak_tol, Newton-refined and
/// clustered.
pub fn localize_peaks(
    p: &DVector<C64>,
    subspace: &SubspaceModel,
    indexing: Indexing,
    opts: &LocalizeOptions,
    peak_tol: f64,
) -> Result<Peaks> {
    let q = dual_polynomial(p, subspace, indexing)?;
    let n = subspace.n();
    let g = (opts.grid_factor * n).max(16);
    let step = 1.0 / g as f64;
    let norms = q.grid_norms(g);
    let threshold = 1.0 - peak_tol;
    let mut found: Vec<(f64, f64)> = Vec::new();
    let mut max_norm: f64 = 0.0;
    for i in TrigPoly::local_maxima(&norms) {
        // Grid samples sit at most step/2 from the true maximum; anything
        // this far below threshold cannot reach it after refinement.
        if norms[i] < 0.5 * threshold {
            max_norm = max_norm.max(norms[i]);
            continue;
        }
        let (t, v) = q.refine_peak(i as f64 * step, opts.newton_steps, step, opts.newton_tol);
        max_norm = max_norm.max(v);
        if v >= threshold {
            found.push((t, v));
        }
    }
    let clustered = cluster(found, opts.cluster_radius_factor / n as f64);
    let mut warnings = Vec::new();
    if max_norm > 1.0 + 10.0 * opts.tol_dual {
        warnings.push(format!("dual polynomial exceeds 1 (max {max_norm:.6}); certificate is infeasible"));
    }
    if clustered.is_empty() {
        warnings.push("no peak reached the unit level".into());
    }
    Ok(Peaks {
        delays: clustered.iter().map(|c| c.0).collect(),
        norms: clustered.iter().map(|c| c.1).collect(),
        max_norm,
        warnings,
    })
}

/// Merges chains of peaks closer than `radius` (wrap-around) into their
/// norm-weighted circular centroid; the merged norm is the chain maximum.
fn cluster(mut peaks: Vec<(f64, f64)>, radius: f64) -> Vec<(f64, f64)> {
    if peaks.len() < 2 {
        return peaks;
    }
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Start the sweep after the widest gap so no chain straddles the wrap.
    let k = peaks.len();
    let start = (0..k)
        .max_by(|&a, &b| {
            let ga = (peaks[a].0 - peaks[(a + k - 1) % k].0).rem_euclid(1.0);
            let gb = (peaks[b].0 - peaks[(b + k - 1) % k].0).rem_euclid(1.0);
            ga.total_cmp(&gb)
        })
        .unwrap_or(0);
    peaks.rotate_left(start);
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for pk in peaks {
        match groups.last_mut() {
            Some(g) if wrap_distance(g.last().unwrap().0, pk.0) < radius => g.push(pk),
            _ => groups.push(vec![pk]),
        }
    }
    let mut out: Vec<(f64, f64)> = groups
        .into_iter()
        .map(|g| {
            let anchor = g[0].0;
            let wsum: f64 = g.iter().map(|p| p.1).sum();
            let offset: f64 = g.iter().map(|p| p.1 * ((p.0 - anchor + 0.5).rem_euclid(1.0) - 0.5)).sum::<f64>() / wsum;
            let peak = g.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            ((anchor + offset).rem_euclid(1.0), peak)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rank1Factors {
    #[serde(with = "cjson::dvector")]
    pub x_hat: DVector<C64>,
    /// Unit norm; its largest-modulus entry is real positive.
    #[serde(with = "cjson::dvector")]
    pub h_hat: DVector<C64>,
    /// σ₂/σ₁.
    pub residual: f64,
}

/// Best rank-one approximation Z ≈ x̂ĥᵀ from the leading singular pair.
pub fn factorize_rank1(z: &DMatrix<C64>) -> Result<Rank1Factors> {
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::domain("Z has non-finite entries"));
    }
    let svd = dense::svd(z)?;
    let s1 = svd.s.first().copied().unwrap_or(0.0);
    if !(s1 > 1e-300) {
        return Err(Error::Degenerate("cannot factor a zero matrix".into()));
    }
    let s2 = svd.s.get(1).copied().unwrap_or(0.0);
    let u = svd.u.column(0).clone_owned();
    // Z ≈ σ₁ u vᴴ, so hᵀ = vᴴ·e^{jφ} up to gauge.
    let mut h: DVector<C64> = svd.v.column(0).conjugate();
    let dom = h.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).map(|(i, _)| i).unwrap_or(0);
    let phase = C64::from_polar(1.0, -h[dom].arg());
    h *= phase;
    h[dom] = C64::new(h[dom].norm(), 0.0);
    let x_hat = u * (C64::new(s1, 0.0) / phase);
    Ok(Rank1Factors { x_hat, h_hat: h, residual: s2 / s1 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeFit {
    #[serde(with = "cjson::vec")]
    pub amplitudes: Vec<C64>,
    /// ‖V a − target‖ / ‖target‖.
    pub residual: f64,
    pub condition: f64,
    pub warnings: Vec<String>,
}

const ILL_CONDITIONED: f64 = 1e8;

/// Least-squares a with x̂_n ≈ Σ_k a_k e^{−j2πnτ_k}.
pub fn recover_amplitudes(x_hat: &DVector<C64>, delays: &[f64], indexing: Indexing) -> Result<AmplitudeFit> {
    let v = vandermonde(x_hat.len(), delays, indexing)?;
    fit(&v, x_hat)
}

/// Least-squares a against the data: y_n ≈ g_n Σ_k a_k e^{−j2πnτ_k}, g = B ĥ.
pub fn refit_amplitudes(
    y: &DVector<C64>,
    subspace: &SubspaceModel,
    h: &DVector<C64>,
    delays: &[f64],
    indexing: Indexing,
) -> Result<AmplitudeFit> {
    let g = crate::signal::synth_psf(subspace, h)?;
    let mut v = vandermonde(y.len(), delays, indexing)?;
    for (mut row, gn) in v.row_iter_mut().zip(g.iter()) {
        row *= *gn;
    }
    fit(&v, y)
}

fn vandermonde(n: usize, delays: &[f64], indexing: Indexing) -> Result<DMatrix<C64>> {
    indexing.validate(n)?;
    if delays.len() > n {
        return Err(Error::domain(format!("{} delays exceed N = {n}", delays.len())));
    }
    let idx: Vec<i64> = indexing.indices(n).collect();
    Ok(DMatrix::from_fn(n, delays.len(), |r, k| C64::from_polar(1.0, -2.0 * PI * idx[r] as f64 * delays[k])))
}

fn fit(v: &DMatrix<C64>, target: &DVector<C64>) -> Result<AmplitudeFit> {
    if v.ncols() == 0 {
        return Ok(AmplitudeFit {
            amplitudes: Vec::new(),
            residual: if target.norm() > 0.0 { 1.0 } else { 0.0 },
            condition: 1.0,
            warnings: Vec::new(),
        });
    }
    let svd = dense::svd(v)?;
    let condition = svd.condition();
    let a = svd.solve(target, 1e-14);
    let tn = target.norm();
    let residual = if tn > 0.0 { (v * &a - target).norm() / tn } else { 0.0 };
    let mut warnings = Vec::new();
    if condition > ILL_CONDITIONED {
        warnings.push(format!("amplitude fit ill-conditioned (cond {condition:.3e})"));
    }
    Ok(AmplitudeFit { amplitudes: a.iter().copied().collect(), residual, condition, warnings })
}

/// ‖Ẑ − Z*‖_F / ‖Z*‖_F.
pub fn normalized_error(z_hat: &DMatrix<C64>, z_star: &DMatrix<C64>) -> Result<f64> {
    if z_hat.shape() != z_star.shape() {
        return Err(Error::domain("shape mismatch"));
    }
    let den = z_star.norm();
    if den == 0.0 {
        return Err(Error::domain("reference matrix is zero"));
    }
    Ok((z_hat - z_star).norm() / den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub delays: Vec<f64>,
    pub peak_norms: Vec<f64>,
    #[serde(with = "cjson::vec")]
    pub amplitudes: Vec<C64>,
    #[serde(with = "cjson::dvector")]
    pub h_hat: DVector<C64>,
    /// Complex scale aligning the estimate with the truth, when known.
    #[serde(with = "cjson::option_scalar")]
    pub beta: Option<C64>,
    pub rank1_residual: f64,
    pub amplitude_fit_residual: f64,
    pub max_dual_norm: f64,
    pub warnings: Vec<String>,
}

/// Peaks, factorization and amplitudes for one solved instance.
pub fn localize(
    p: &DVector<C64>,
    z_hat: &DMatrix<C64>,
    subspace: &SubspaceModel,
    indexing: Indexing,
    opts: &LocalizeOptions,
    peak_tol: f64,
) -> Result<LocalizationResult> {
    let peaks = localize_peaks(p, subspace, indexing, opts, peak_tol)?;
    let mut warnings = peaks.warnings.clone();
    let (h_hat, amplitudes, rank1_residual, fit_res) = match factorize_rank1(z_hat) {
        Ok(f) => {
            let fit = recover_amplitudes(&f.x_hat, &peaks.delays, indexing)?;
            warnings.extend(fit.warnings);
            (f.h_hat, fit.amplitudes, f.residual, fit.residual)
        }
        Err(Error::Degenerate(m)) => {
            warnings.push(m);
            (DVector::zeros(subspace.l()), vec![C64::new(0.0, 0.0); peaks.delays.len()], 0.0, 0.0)
        }
        Err(e) => return Err(e),
    };
    Ok(LocalizationResult {
        delays: peaks.delays,
        peak_norms: peaks.norms,
        amplitudes,
        h_hat,
        beta: None,
        rank1_residual,
        amplitude_fit_residual: fit_res,
        max_dual_norm: peaks.max_norm,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: usize,
    pub estimate: usize,
    pub delay_error: f64,
    /// |β·â − a| / |a| after global scale alignment.
    pub amplitude_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    /// Unmatched truth indices.
    pub misses: Vec<usize>,
    /// Unmatched estimate indices.
    pub false_alarms: Vec<usize>,
    /// β minimizing Σ|β·â_k − a_k|² over matched pairs: Σ conj(â)a / Σ|â|².
    #[serde(with = "cjson::scalar")]
    pub beta: C64,
    pub max_delay_error: f64,
}

impl MatchReport {
    pub fn all_found(&self) -> bool {
        self.misses.is_empty()
    }
}

/// Delay error scale for the integer assignment costs.
const COST_SCALE: f64 = 1e15;

/// One-to-one assignment of estimates to truth spikes within `radius`
/// (wrap-around), maximizing the match count and then minimizing total delay
/// error. Estimate amplitudes may be empty, in which case amplitude errors are
/// NaN and β is 1.
pub fn match_spikes(truth: &SpikeSignal, est_delays: &[f64], est_amps: &[C64], radius: f64) -> Result<MatchReport> {
    if !(radius > 0.0) {
        return Err(Error::domain("match radius must be positive"));
    }
    if !est_amps.is_empty() && est_amps.len() != est_delays.len() {
        return Err(Error::domain("estimate delays and amplitudes differ in length"));
    }
    let (kt, ke) = (truth.len(), est_delays.len());
    let mut assigned: Vec<(usize, usize)> = Vec::new();
    if kt > 0 && ke > 0 {
        // Out-of-radius pairs cost more than any full set of in-radius ones,
        // so the minimum first maximizes the number of in-radius pairs.
        let big = (COST_SCALE * radius).ceil() as i64 * (kt.max(ke) as i64 + 1);
        let cost = |t: usize, e: usize| -> i64 {
            let d = wrap_distance(truth.delays()[t], est_delays[e]);
            if d <= radius {
                (d * COST_SCALE).round() as i64
            } else {
                big
            }
        };
        let transpose = kt > ke;
        let (rows, cols) = if transpose { (ke, kt) } else { (kt, ke) };
        let m = Matrix::from_fn(rows, cols, |(r, c)| if transpose { cost(c, r) } else { cost(r, c) });
        let (_, assign) = kuhn_munkres_min(&m);
        for (r, &c) in assign.iter().enumerate() {
            let (t, e) = if transpose { (c, r) } else { (r, c) };
            if wrap_distance(truth.delays()[t], est_delays[e]) <= radius {
                assigned.push((t, e));
            }
        }
    }
    assigned.sort();
    let a = truth.amplitudes();
    let beta = if est_amps.is_empty() {
        C64::new(1.0, 0.0)
    } else {
        let num: C64 = assigned.iter().map(|&(t, e)| est_amps[e].conj() * a[t]).sum();
        let den: f64 = assigned.iter().map(|&(_, e)| est_amps[e].norm_sqr()).sum();
        if den > 0.0 {
            num / den
        } else {
            C64::new(1.0, 0.0)
        }
    };
    let pairs: Vec<MatchedPair> = assigned
        .iter()
        .map(|&(t, e)| MatchedPair {
            truth: t,
            estimate: e,
            delay_error: wrap_distance(truth.delays()[t], est_delays[e]),
            amplitude_error: if est_amps.is_empty() {
                f64::NAN
            } else {
                (beta * est_amps[e] - a[t]).norm() / a[t].norm()
            },
        })
        .collect();
    let misses = (0..kt).filter(|t| !assigned.iter().any(|p| p.0 == *t)).collect();
    let false_alarms = (0..ke).filter(|e| !assigned.iter().any(|p| p.1 == *e)).collect();
    let max_delay_error = pairs.iter().map(|p| p.delay_error).fold(0.0, f64::max);
    Ok(MatchReport { pairs, misses, false_alarms, beta, max_delay_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::{draw_noise, sample_subspace, steering_vector, synth_spike_spectrum, SubspaceKind};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn indicator_dual_with_ones_is_constant() {
        for ix in [Indexing::Symmetric, Indexing::Shifted] {
            let n = 9;
            let b = SubspaceModel::ones(n, 2).unwrap();
            let mut p = DVector::zeros(n);
            // Row of frequency index 0.
            let row = ix.indices(n).position(|k| k == 0).unwrap();
            p[row] = C64::new(1.0, 0.0);
            let vals = dual_polynomial_eval(&p, &b, ix, &[0.0, 0.3, 0.71], 1).unwrap();
            let expect = 1.0 / (n as f64).sqrt();
            for v in vals {
                for c in v[0].iter() {
                    assert!((c - C64::new(expect, 0.0)).norm() < 1e-15);
                }
                assert!(v[1].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_dual_is_zero() {
        let b = sample_subspace(SubspaceKind::ComplexGaussian, 8, 2, 1).unwrap();
        let v = dual_polynomial_eval(&DVector::zeros(8), &b, Indexing::Shifted, &[0.4], 0).unwrap();
        assert_eq!(v[0][0].norm(), 0.0);
    }

    #[test]
    fn matches_term_by_term_sum() {
        let n = 13;
        let b = sample_subspace(SubspaceKind::ComplexGaussian, n, 3, 4).unwrap();
        let p = draw_noise(n, 1.0, 5);
        for ix in [Indexing::Symmetric, Indexing::Shifted] {
            for tau in [0.0, 0.123, 0.9] {
                let got = &dual_polynomial_eval(&p, &b, ix, &[tau], 0).unwrap()[0][0];
                // Q = X*(p)ᴴ c(τ).
                let c = steering_vector(tau, n, ix).unwrap();
                let oracle = crate::lifting::lift_adjoint(&p, &b).unwrap().adjoint() * c;
                assert!((got - oracle).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn fejer_like_single_peak_is_found() {
        // Q(τ) = Σ_n w_n e^{−j2πn(τ−τ₁)} with nonnegative weights summing to 1
        // peaks at exactly 1 at τ₁.
        let n = 17;
        let m = 4i64;
        let w: Vec<f64> = (-2 * m..=2 * m).map(|k| (2 * m + 1 - k.abs()) as f64).collect();
        let tot: f64 = w.iter().sum();
        let tau1 = 0.5;
        let sqrt_n = (n as f64).sqrt();
        // conj(p_n)/√N = w_n e^{j2πnτ₁} / tot with b_n = 1.
        let p = DVector::from_iterator(
            n,
            (-2 * m..=2 * m)
                .zip(&w)
                .map(|(k, wk)| (C64::from_polar(wk / tot, 2.0 * PI * k as f64 * tau1) * sqrt_n).conj()),
        );
        let b = SubspaceModel::ones(n, 1).unwrap();
        let peaks = localize_peaks(&p, &b, Indexing::Symmetric, &LocalizeOptions::default(), 1e-4).unwrap();
        assert_eq!(peaks.delays.len(), 1);
        assert!((peaks.delays[0] - 0.5).abs() < 1.0 / (16.0 * n as f64));
        assert!((peaks.norms[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_is_empty() {
        let n = 9;
        let b = SubspaceModel::ones(n, 1).unwrap();
        let mut p = DVector::zeros(n);
        p[4] = C64::new(0.9 * (n as f64).sqrt(), 0.0);
        let peaks = localize_peaks(&p, &b, Indexing::Symmetric, &LocalizeOptions::default(), 1e-4).unwrap();
        assert!(peaks.is_empty());
        assert!(!peaks.warnings.is_empty());
    }

    #[test]
    fn cluster_merges_across_wrap() {
        let merged = cluster(vec![(0.999, 1.0), (0.001, 1.0), (0.5, 1.0)], 0.01);
        assert_eq!(merged.len(), 2);
        assert!(wrap_distance(merged[0].0, 0.0) < 1e-12 || wrap_distance(merged[1].0, 0.0) < 1e-12);
    }

    #[test]
    fn factorize_hand_example() {
        let x = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)]);
        let h = DVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
        let f = factorize_rank1(&(&x * h.transpose())).unwrap();
        assert!((f.h_hat[0] - C64::new(0.6, 0.0)).norm() < 1e-14);
        assert!((f.h_hat[1] - C64::new(0.8, 0.0)).norm() < 1e-14);
        assert!((f.x_hat[0] - C64::new(5.0, 0.0)).norm() < 1e-13);
        assert!((f.x_hat[1] - C64::new(10.0, 0.0)).norm() < 1e-13);
        assert!(f.residual < 1e-15);
    }

    #[test]
    fn factorize_zero_is_degenerate() {
        assert!(matches!(factorize_rank1(&DMatrix::zeros(4, 2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn factorize_perturbed_residual() {
        let x = draw_noise(20, 1.0, 1);
        let h = draw_noise(3, 1.0, 2);
        let z = &x * h.transpose();
        let s1 = z.norm();
        let mut e = DMatrix::zeros(20, 3);
        // Perturbation orthogonal to the rank-one term: unit spectral norm.
        let xu = &x / C64::new(x.norm(), 0.0);
        let mut v = draw_noise(20, 1.0, 3);
        v -= &xu * xu.dotc(&v);
        v /= C64::new(v.norm(), 0.0);
        let mut w = draw_noise(3, 1.0, 4);
        let hc = h.conjugate() / C64::new(h.norm(), 0.0);
        w -= &hc * hc.dotc(&w);
        w /= C64::new(w.norm(), 0.0);
        e += &v * w.adjoint() * C64::new(1e-6, 0.0);
        let f = factorize_rank1(&(z + e)).unwrap();
        assert!((f.residual - 1e-6 / s1).abs() < 1e-12, "{} {}", f.residual, 1e-6 / s1);
    }

    #[test]
    fn single_spike_amplitude() {
        let s = SpikeSignal::new(vec![0.3], vec![C64::new(2.0, 1.0)]).unwrap();
        let x = synth_spike_spectrum(&s, 16, Indexing::Shifted).unwrap();
        let fit = recover_amplitudes(&x, &[0.3], Indexing::Shifted).unwrap();
        assert!((fit.amplitudes[0] - C64::new(2.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn three_spike_round_trip_and_perturbation() {
        let a = vec![C64::new(1.0, -0.5), C64::new(0.3, 0.8), C64::new(-2.0, 0.1)];
        let d = vec![0.1, 0.45, 0.8];
        let s = SpikeSignal::new(d.clone(), a.clone()).unwrap();
        let x = synth_spike_spectrum(&s, 33, Indexing::Symmetric).unwrap();
        let fit = recover_amplitudes(&x, &d, Indexing::Symmetric).unwrap();
        for (g, e) in fit.amplitudes.iter().zip(&a) {
            assert!((g - e).norm() < 1e-8);
        }
        assert!(fit.residual < 1e-12);
        let shifted: Vec<f64> = d.iter().map(|t| t + 1e-3).collect();
        let fit = recover_amplitudes(&x, &shifted, Indexing::Symmetric).unwrap();
        assert!(fit.residual > 1e-4);
        let err: f64 = fit.amplitudes.iter().zip(&a).map(|(g, e)| (g - e).norm_sqr()).sum::<f64>().sqrt();
        let an: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(err / an < 10.0 * fit.residual);
    }

    #[test]
    fn near_duplicate_delays_warn() {
        let x = draw_noise(16, 1.0, 1);
        let fit = recover_amplitudes(&x, &[0.2, 0.2 + 1e-11], Indexing::Shifted).unwrap();
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn data_refit_matches_truth() {
        let n = 24;
        let b = sample_subspace(SubspaceKind::ComplexGaussian, n, 2, 3).unwrap();
        let h = draw_noise(2, 1.0, 4);
        let s = SpikeSignal::new(vec![0.2, 0.6], vec![C64::new(1.0, 1.0), C64::new(0.5, 0.0)]).unwrap();
        let inst =
            crate::signal::ProblemInstance::synthesize(s, b.clone(), h.clone(), None, 0.0, Indexing::Shifted).unwrap();
        let fit = refit_amplitudes(&inst.y, &b, &h, &[0.2, 0.6], Indexing::Shifted).unwrap();
        assert!((fit.amplitudes[0] - C64::new(1.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn normalized_error_cases() {
        let z = DMatrix::from_fn(4, 2, |i, j| C64::new(i as f64, j as f64 + 1.0));
        assert_eq!(normalized_error(&z, &z).unwrap(), 0.0);
        assert!((normalized_error(&(&z * C64::new(2.0, 0.0)), &z).unwrap() - 1.0).abs() < 1e-15);
        assert!(normalized_error(&z, &DMatrix::zeros(4, 2)).is_err());
        let w = DMatrix::from_fn(4, 2, |i, j| C64::new(j as f64, i as f64 * 0.5));
        let num: f64 = z.iter().zip(w.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = z.iter().map(|a| a.norm_sqr()).sum();
        assert!((normalized_error(&w, &z).unwrap() - (num / den).sqrt()).abs() < 1e-14);
    }

    fn spikes(d: &[f64]) -> SpikeSignal {
        SpikeSignal::new(d.to_vec(), vec![C64::new(1.0, 0.0); d.len()]).unwrap()
    }

    #[test]
    fn identical_sets_match() {
        let t = spikes(&[0.1, 0.4, 0.7]);
        let r = match_spikes(&t, t.delays(), t.amplitudes(), 0.01).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert!(r.misses.is_empty() && r.false_alarms.is_empty());
        assert_eq!(r.max_delay_error, 0.0);
        assert!((r.beta - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn shifted_estimates_match_with_offset() {
        let n = 64.0;
        let t = spikes(&[0.1, 0.4, 0.995]);
        let est: Vec<f64> = t.delays().iter().map(|d| (d + 0.3 / n).rem_euclid(1.0)).collect();
        let r = match_spikes(&t, &est, &[], 0.5 / n).unwrap();
        assert_eq!(r.pairs.len(), 3);
        for p in &r.pairs {
            assert!((p.delay_error - 0.3 / n).abs() < 1e-12);
        }
    }

    #[test]
    fn spurious_estimate_is_false_alarm() {
        let t = spikes(&[0.05, 0.2, 0.35, 0.5, 0.65, 0.8]);
        let mut est = t.delays().to_vec();
        est.push(0.9);
        let r = match_spikes(&t, &est, &[], 0.01).unwrap();
        assert_eq!(r.pairs.len(), 6);
        assert_eq!(r.false_alarms, vec![6]);
    }

    #[test]
    fn beta_absorbs_global_scale() {
        let t = SpikeSignal::new(vec![0.1, 0.5], vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3)]).unwrap();
        let s = C64::new(0.3, -1.1);
        let est: Vec<C64> = t.amplitudes().iter().map(|a| a / s).collect();
        let r = match_spikes(&t, t.delays(), &est, 0.01).unwrap();
        assert!((r.beta - s).norm() < 1e-14);
        assert!(r.pairs.iter().all(|p| p.amplitude_error < 1e-14));
    }

    /// Max count, then min total distance, by enumerating injections.
    fn exhaustive(t: &[f64], e: &[f64], radius: f64) -> (usize, f64) {
        fn rec(i: usize, t: &[f64], e: &[f64], used: &mut Vec<bool>, r: f64) -> (usize, f64) {
            if i == t.len() {
                return (0, 0.0);
            }
            let mut best = rec(i + 1, t, e, used, r);
            for j in 0..e.len() {
                let d = wrap_distance(t[i], e[j]);
                if !used[j] && d <= r {
                    used[j] = true;
                    let (c, s) = rec(i + 1, t, e, used, r);
                    used[j] = false;
                    let cand = (c + 1, s + d);
                    if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                        best = cand;
                    }
                }
            }
            best
        }
        rec(0, t, e, &mut vec![false; e.len()], radius)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn assignment_matches_exhaustive(seed in 0u64..100_000, kt in 0usize..7, ke in 0usize..7) {
            let mut rng = rng_from_seed(seed);
            let t: Vec<f64> = (0..kt).map(|_| rng.random::<f64>()).collect();
            let e: Vec<f64> = (0..ke).map(|_| rng.random::<f64>()).collect();
            let radius = 0.15;
            let r = match_spikes(&spikes(&t), &e, &[], radius).unwrap();
            let (count, total) = exhaustive(&t, &e, radius);
            prop_assert_eq!(r.pairs.len(), count);
            let got: f64 = r.pairs.iter().map(|p| p.delay_error).sum();
            prop_assert!((got - total).abs() < 1e-9);
            // Swapping roles swaps misses and false alarms.
            let back = match_spikes(&spikes(&e), &t, &[], radius).unwrap();
            prop_assert_eq!(back.misses.len(), r.false_alarms.len());
            prop_assert_eq!(back.false_alarms.len(), r.misses.len());
        }

        #[test]
        fn factorization_round_trip(seed in 0u64..10_000, n in 2usize..30, l in 1usize..6) {
            let x = draw_noise(n, 1.0, seed);
            let h = draw_noise(l, 1.0, seed + 1);
            let z = &x * h.transpose();
            let f = factorize_rank1(&z).unwrap();
            let rel = (&f.x_hat * f.h_hat.transpose() - &z).norm() / z.norm();
            prop_assert!(rel <= 1e-12, "rel {rel:e} residual {:e}", f.residual);
            prop_assert!(f.residual <= 1e-12);
            prop_assert!((f.h_hat.norm() - 1.0).abs() < 1e-12);
            let dom = f.h_hat.iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(f.h_hat.iter().any(|v| v.im == 0.0 && v.re == dom));
        }

        #[test]
        fn peaks_never_exceed_dual_norm(seed in 0u64..10_000) {
            let n = 17;
            let b = sample_subspace(SubspaceKind::ComplexGaussian, n, 2, seed).unwrap();
            let p = draw_noise(n, 1.0, seed + 3);
            let y = crate::lifting::lift_adjoint(&p, &b).unwrap();
            let (dn, _) = crate::sdp::dual_atomic_norm(&y, &Default::default());
            let curve = dual_polynomial_curve(&p, &b, Indexing::Symmetric, 1024).unwrap();
            prop_assert!(curve.iter().all(|(_, v)| *v <= dn + 1e-10));
        }
    }
}
