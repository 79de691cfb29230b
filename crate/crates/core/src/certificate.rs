//! Explicit dual certificate built from the squared Fejér kernel.
//!
//! With M the half bandwidth (N = 4M + 1, symmetric indexing) the candidate is
//!
//!   Q(τ) = Σ_k 𝐊(τ − τ_k) α_k + Σ_k 𝐊′(τ − τ_k) β_k,
//!   𝐊(τ) = (1/M) Σ_n s_n b_n b_nᴴ e^{−j2πτn},
//!
//! with α, β chosen so Q(τ_k) = conj(sign a_k)·conj(h)/‖h‖ and Q′(τ_k) = 0.
//! These targets make Re⟨X*(q), Z*⟩ = ‖Z*‖_A for Z* = Σ a_k √N c(τ_k) hᵀ.
//! The certificate proves Z* optimal when additionally ‖Q(τ)‖ < 1 off the
//! support; this module builds Q and checks that numerically.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::signal::{sample_subspace, wrap_distance, SubspaceKind, SubspaceModel};
use crate::trigpoly::TrigPoly;
use crate::C64;

/// Radius, in units of 1/M, of the near region around each spike.
pub const NEAR_RADIUS: f64 = 0.08245;

/// Far-region level the scalar construction is known to stay below.
pub const FAR_LEVEL: f64 = 0.99992;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FejerTable {
    pub m: usize,
    /// s_n for n = −2M..2M.
    pub s: Vec<f64>,
    /// 1/√|K″(0)|.
    pub kappa: f64,
}

impl FejerTable {
    pub fn n(&self) -> usize {
        4 * self.m + 1
    }

    pub fn coeff(&self, n: i64) -> f64 {
        let i = n + 2 * self.m as i64;
        if i < 0 || i as usize >= self.s.len() {
            0.0
        } else {
            self.s[i as usize]
        }
    }

    fn indices(&self) -> impl Iterator<Item = i64> {
        let m = self.m as i64;
        -2 * m..=2 * m
    }
}

/// s_n = (1/M) Σ_i (1 − |i/M|)(1 − |(n − i)/M|), the autoconvolution of the
/// triangle; summed over n it gives M.
pub fn fejer_coeffs(m: usize) -> Result<FejerTable> {
    if m < 1 {
        return Err(Error::domain("M must be at least 1"));
    }
    let mf = m as f64;
    let mi = m as i64;
    let tri = |i: i64| (1.0 - (i.abs() as f64) / mf).max(0.0);
    let s: Vec<f64> = (-2 * mi..=2 * mi)
        .map(|n| ((n - mi).max(-mi)..=(n + mi).min(mi)).map(|i| tri(i) * tri(n - i)).sum::<f64>() / mf)
        .collect();
    let k2: f64 = (-2 * mi..=2 * mi).zip(&s).map(|(n, sn)| sn * (2.0 * PI * n as f64).powi(2)).sum::<f64>() / mf;
    Ok(FejerTable { m, s, kappa: 1.0 / k2.sqrt() })
}

fn deriv_factor(n: i64, order: usize) -> C64 {
    C64::new(0.0, -2.0 * PI * n as f64).powu(order as u32)
}

/// K^(m)(τ) = (1/M) Σ s_n (−j2πn)^m e^{−j2πτn}.
pub fn kernel_eval(table: &FejerTable, order: usize, tau: f64) -> Result<C64> {
    if order > 3 {
        return Err(Error::domain(format!("derivative order {order} not in 0..=3")));
    }
    let sum: C64 = table
        .indices()
        .zip(&table.s)
        .map(|(n, &sn)| deriv_factor(n, order) * C64::from_polar(sn, -2.0 * PI * tau * n as f64))
        .sum();
    Ok(sum / table.m as f64)
}

fn check_rows(table: &FejerTable, subspace: &SubspaceModel) -> Result<()> {
    if subspace.n() != table.n() {
        return Err(Error::Convention(format!(
            "the kernel needs N = 4M + 1 = {} rows on the symmetric grid, got {}",
            table.n(),
            subspace.n()
        )));
    }
    Ok(())
}

/// 𝐊^(m)(τ) = (1/M) Σ s_n (−j2πn)^m b_n b_nᴴ e^{−j2πτn}; rows of B are taken
/// in order n = −2M..2M.
pub fn matrix_kernel_eval(
    table: &FejerTable,
    subspace: &SubspaceModel,
    order: usize,
    tau: f64,
) -> Result<DMatrix<C64>> {
    if order > 3 {
        return Err(Error::domain(format!("derivative order {order} not in 0..=3")));
    }
    check_rows(table, subspace)?;
    let l = subspace.l();
    let b = subspace.matrix();
    let mut out = DMatrix::zeros(l, l);
    for (r, (n, &sn)) in table.indices().zip(&table.s).enumerate() {
        if sn == 0.0 {
            continue;
        }
        let w = deriv_factor(n, order) * C64::from_polar(sn, -2.0 * PI * tau * n as f64);
        let row = b.row(r);
        for i in 0..l {
            for j in 0..l {
                out[(i, j)] += w * row[i] * row[j].conj();
            }
        }
    }
    Ok(out / C64::new(table.m as f64, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// From kernel blocks K, κK′, −κK′, −κ²K″.
    Blocks,
    /// (1/M) Σ s_n (ν_n ⊗ b_n)(ν_n ⊗ b_n)ᴴ.
    Kronecker,
}

/// ν_n = [e^{−j2πτ_k n}]_k stacked over [j2πnκ·e^{−j2πτ_k n}]_k.
fn nu(table: &FejerTable, delays: &[f64], n: i64) -> DVector<C64> {
    let k = delays.len();
    let d = C64::new(0.0, 2.0 * PI * n as f64 * table.kappa);
    DVector::from_fn(2 * k, |a, _| {
        let e = C64::from_polar(1.0, -2.0 * PI * delays[a % k] * n as f64);
        if a < k {
            e
        } else {
            d * e
        }
    })
}

/// Scalar system matrix Φ (2K × 2K).
pub fn build_phi(table: &FejerTable, delays: &[f64], route: Route) -> Result<DMatrix<C64>> {
    let ones = SubspaceModel::ones(table.n(), 1)?;
    build_gamma(table, &ones, delays, route)
}

/// Γ (2LK × 2LK), entry (a·L + i, c·L + j) for kernel block (a, c).
pub fn build_gamma(table: &FejerTable, subspace: &SubspaceModel, delays: &[f64], route: Route) -> Result<DMatrix<C64>> {
    check_rows(table, subspace)?;
    let (k, l) = (delays.len(), subspace.l());
    let dim = 2 * k * l;
    let mut g = DMatrix::zeros(dim, dim);
    match route {
        Route::Blocks => {
            let kappa = C64::new(table.kappa, 0.0);
            for a in 0..k {
                for c in 0..k {
                    let t = delays[a] - delays[c];
                    let k0 = matrix_kernel_eval(table, subspace, 0, t)?;
                    let k1 = matrix_kernel_eval(table, subspace, 1, t)?;
                    let k2 = matrix_kernel_eval(table, subspace, 2, t)?;
                    let blocks = [
                        (a, c, k0),
                        (a, k + c, &k1 * kappa),
                        (k + a, c, &k1 * -kappa),
                        (k + a, k + c, k2 * -(kappa * kappa)),
                    ];
                    for (r, s, blk) in blocks {
                        g.view_mut((r * l, s * l), (l, l)).copy_from(&blk);
                    }
                }
            }
        }
        Route::Kronecker => {
            let b = subspace.matrix();
            for (r, (n, &sn)) in table.indices().zip(&table.s).enumerate() {
                if sn == 0.0 {
                    continue;
                }
                let v = nu(table, delays, n);
                let w = DVector::from_fn(dim, |idx, _| v[idx / l] * b[(r, idx % l)]);
                g += (&w * w.adjoint()) * C64::new(sn, 0.0);
            }
            g /= C64::new(table.m as f64, 0.0);
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhiNorms {
    /// ‖I − Φ‖.
    pub deviation: f64,
    pub norm: f64,
    /// ‖Φ⁻¹‖; infinite when Φ is singular.
    pub inverse_norm: f64,
}

/// Spectral norms of a Hermitian Φ.
pub fn phi_norms(phi: &DMatrix<C64>) -> Result<PhiNorms> {
    let eig = dense::hermitian_eigenvalues(phi)?;
    let norm = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let deviation = eig.iter().fold(0.0f64, |m, e| m.max((1.0 - e).abs()));
    let min_abs = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    Ok(PhiNorms { deviation, norm, inverse_norm: if min_abs > 0.0 { 1.0 / min_abs } else { f64::INFINITY } })
}

/// Largest Γ condition number accepted by the coefficient solve.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct CertificateWorkspace {
    pub table: FejerTable,
    pub subspace: SubspaceModel,
    pub delays: Vec<f64>,
    /// Unit-modulus signs of the spike amplitudes.
    pub signs: Vec<C64>,
    /// Unit-norm h.
    pub h: DVector<C64>,
    /// ‖h‖ before normalization.
    pub h_scale: f64,
    pub gamma: DMatrix<C64>,
    pub alpha: Vec<DVector<C64>>,
    /// Unscaled: Q uses 𝐊′(τ − τ_k)β_k directly.
    pub beta: Vec<DVector<C64>>,
    pub condition: f64,
    /// ‖Γv − rhs‖ / ‖rhs‖.
    pub solve_residual: f64,
    poly: TrigPoly,
}

impl CertificateWorkspace {
    /// Builds Γ and solves for α, β. Fails with `Degenerate` when Γ is
    /// ill-conditioned beyond `MAX_CONDITION`.
    pub fn new(
        table: &FejerTable,
        subspace: &SubspaceModel,
        delays: &[f64],
        signs: &[C64],
        h: &DVector<C64>,
    ) -> Result<Self> {
        check_rows(table, subspace)?;
        if delays.is_empty() || delays.len() != signs.len() {
            return Err(Error::domain("need one sign per delay and at least one delay"));
        }
        if h.len() != subspace.l() {
            return Err(Error::domain("h length differs from L"));
        }
        for (i, a) in delays.iter().enumerate() {
            if !(0.0..1.0).contains(a) {
                return Err(Error::domain(format!("delay {a} outside [0, 1)")));
            }
            if delays[..i].iter().any(|b| wrap_distance(*a, *b) == 0.0) {
                return Err(Error::domain("delays must be distinct"));
            }
        }
        let h_scale = h.norm();
        if h_scale == 0.0 {
            return Err(Error::domain("h is zero"));
        }
        let h_unit = h / C64::new(h_scale, 0.0);
        let signs: Vec<C64> = signs.iter().map(|s| s / s.norm()).collect();
        let gamma = build_gamma(table, subspace, delays, Route::Blocks)?;
        let (alpha, beta, condition, solve_residual) = solve_coefficients(&gamma, &signs, &h_unit, table.kappa)?;
        let poly = implied_poly(table, subspace, delays, &alpha, &beta);
        Ok(CertificateWorkspace {
            table: table.clone(),
            subspace: subspace.clone(),
            delays: delays.to_vec(),
            signs,
            h: h_unit,
            h_scale,
            gamma,
            alpha,
            beta,
            condition,
            solve_residual,
            poly,
        })
    }

    /// Interpolation target conj(sign_k)·conj(h) at spike k.
    pub fn target(&self, k: usize) -> DVector<C64> {
        self.h.conjugate() * self.signs[k].conj()
    }

    /// Q as a trigonometric polynomial over n = −2M..2M.
    pub fn poly(&self) -> &TrigPoly {
        &self.poly
    }

    /// Dual vector q with Q(τ) = X*(q)ᴴc(τ) on the symmetric N-point grid:
    /// conj(q_n) = (√N/M) s_n b_nᴴ Σ_k e^{j2πτ_k n}(α_k − j2πn β_k).
    pub fn implied_dual(&self) -> DVector<C64> {
        let sqrt_n = (self.table.n() as f64).sqrt();
        let b = self.subspace.matrix();
        let coeffs = self.poly.coeffs();
        DVector::from_fn(self.table.n(), |r, _| {
            let rn: f64 = b.row(r).iter().map(|v| v.norm_sqr()).sum();
            if rn == 0.0 {
                return C64::new(0.0, 0.0);
            }
            // Row r of the polynomial is c_r·b_r for a scalar c_r = conj(q_r)/√N.
            let c: C64 = coeffs.row(r).iter().zip(b.row(r).iter()).map(|(x, bv)| x * bv.conj()).sum::<C64>() / rn;
            (c * sqrt_n).conj()
        })
    }
}

/// (α, β, cond Γ, relative residual).
pub type CoefficientSolve = (Vec<DVector<C64>>, Vec<DVector<C64>>, f64, f64);

/// Solves Γ[α; β/κ] = [targets; 0].
pub fn solve_coefficients(
    gamma: &DMatrix<C64>,
    signs: &[C64],
    h: &DVector<C64>,
    kappa: f64,
) -> Result<CoefficientSolve> {
    let k = signs.len();
    let l = h.len();
    if gamma.nrows() != 2 * k * l {
        return Err(Error::domain("Γ size does not match 2KL"));
    }
    let eig = dense::hermitian_eigenvalues(gamma)?;
    let max = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Degenerate(format!("Γ is ill-conditioned (cond {condition:.3e})")));
    }
    let mut rhs = DVector::zeros(2 * k * l);
    for (kk, s) in signs.iter().enumerate() {
        for i in 0..l {
            rhs[kk * l + i] = s.conj() * h[i].conj();
        }
    }
    let v = gamma.clone().lu().solve(&rhs).ok_or_else(|| Error::Degenerate("Γ is singular".into()))?;
    let residual = (gamma * &v - &rhs).norm() / rhs.norm();
    let alpha = (0..k).map(|kk| v.rows(kk * l, l).clone_owned()).collect();
    let beta = (0..k).map(|kk| v.rows((k + kk) * l, l) * C64::new(kappa, 0.0)).collect();
    Ok((alpha, beta, condition, residual))
}

fn implied_poly(
    table: &FejerTable,
    subspace: &SubspaceModel,
    delays: &[f64],
    alpha: &[DVector<C64>],
    beta: &[DVector<C64>],
) -> TrigPoly {
    let b = subspace.matrix();
    let l = subspace.l();
    let mut coeffs = DMatrix::zeros(table.n(), l);
    for (r, (n, &sn)) in table.indices().zip(&table.s).enumerate() {
        if sn == 0.0 {
            continue;
        }
        let d = C64::new(0.0, -2.0 * PI * n as f64);
        let mut acc = C64::new(0.0, 0.0);
        for (kk, &tau) in delays.iter().enumerate() {
            let e = C64::from_polar(1.0, 2.0 * PI * tau * n as f64);
            let v = &alpha[kk] + &beta[kk] * d;
            let bh_v: C64 = b.row(r).iter().zip(v.iter()).map(|(bv, x)| bv.conj() * x).sum();
            acc += e * bh_v;
        }
        let c = acc * (sn / table.m as f64);
        for i in 0..l {
            coeffs[(r, i)] = c * b[(r, i)];
        }
    }
    TrigPoly::new(-2 * table.m as i64, coeffs)
}

/// Q^(m)(τ) by the kernel sum Σ_k 𝐊^(m)(τ − τ_k)α_k + 𝐊^(m+1)(τ − τ_k)β_k.
pub fn certificate_eval(ws: &CertificateWorkspace, order: usize, tau: f64) -> Result<DVector<C64>> {
    if order > 2 {
        return Err(Error::domain("certificate derivatives are available up to order 2"));
    }
    let mut out = DVector::zeros(ws.subspace.l());
    for (kk, &tk) in ws.delays.iter().enumerate() {
        out += matrix_kernel_eval(&ws.table, &ws.subspace, order, tau - tk)? * &ws.alpha[kk];
        out += matrix_kernel_eval(&ws.table, &ws.subspace, order + 1, tau - tk)? * &ws.beta[kk];
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    pub grid: usize,
    pub near_points: usize,
    /// Grid points within exclusion_factor / M of a spike are not off-support.
    pub exclusion_factor: f64,
    pub newton_steps: usize,
    pub interpolation_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            grid: 1 << 16,
            near_points: 64,
            exclusion_factor: 1e-6,
            newton_steps: 8,
            interpolation_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub m: usize,
    pub k: usize,
    pub l: usize,
    /// max_k ‖Q(τ_k) − target_k‖.
    pub interpolation_residual: f64,
    /// max_k κ‖Q′(τ_k)‖.
    pub derivative_residual: f64,
    pub solve_residual: f64,
    pub condition: f64,
    /// Max ‖Q‖ over grid and near-region points away from the support.
    pub off_support_max: f64,
    /// Max ‖Q‖ at distance ≥ NEAR_RADIUS/M from every spike, Newton-refined.
    pub far_max: f64,
    /// ‖Q‖² has negative curvature at every near-region sample.
    pub near_concave: bool,
    /// Fitted C_b in 1 − ‖Q‖ ≈ C_b M²(τ − τ_k)², one per spike.
    pub near_decay: Vec<f64>,
    pub pass: bool,
    pub failure: Option<String>,
}

impl ValidationReport {
    fn failed(m: usize, k: usize, l: usize, why: String) -> Self {
        ValidationReport {
            m,
            k,
            l,
            interpolation_residual: f64::NAN,
            derivative_residual: f64::NAN,
            solve_residual: f64::NAN,
            condition: f64::INFINITY,
            off_support_max: f64::NAN,
            far_max: f64::NAN,
            near_concave: false,
            near_decay: Vec::new(),
            pass: false,
            failure: Some(why),
        }
    }
}

pub fn validate_certificate(ws: &CertificateWorkspace, opts: &ValidationOptions) -> ValidationReport {
    let m = ws.table.m;
    let mf = m as f64;
    let k = ws.delays.len();
    let poly = &ws.poly;

    let mut interp: f64 = 0.0;
    let mut deriv: f64 = 0.0;
    for kk in 0..k {
        let d = poly.eval_derivs(ws.delays[kk], 1);
        interp = interp.max((&d[0] - ws.target(kk)).norm());
        deriv = deriv.max(ws.table.kappa * d[1].norm());
    }

    let exclusion = opts.exclusion_factor / mf;
    let near = NEAR_RADIUS / mf;
    let dist = |t: f64| ws.delays.iter().map(|&d| wrap_distance(t, d)).fold(f64::INFINITY, f64::min);

    let g = opts.grid.max(1);
    let step = 1.0 / g as f64;
    let norms = poly.grid_norms(g);
    let mut off_max: f64 = 0.0;
    let mut far_max: f64 = 0.0;
    for (i, &v) in norms.iter().enumerate() {
        let dd = dist(i as f64 * step);
        if dd >= exclusion {
            off_max = off_max.max(v);
        }
        if dd >= near {
            far_max = far_max.max(v);
        }
    }
    // Polish far-region maxima; a refined point that drifts into a near
    // region is covered by the near-region scan instead.
    for i in TrigPoly::local_maxima(&norms) {
        let t0 = i as f64 * step;
        if dist(t0) < near {
            continue;
        }
        let (t, v) = poly.refine_peak(t0, opts.newton_steps, step, 1e-14);
        if dist(t) >= near {
            far_max = far_max.max(v);
            off_max = off_max.max(v);
        }
    }

    let mut near_concave = true;
    let mut near_decay = Vec::with_capacity(k);
    let np = opts.near_points.max(2);
    for &tk in &ws.delays {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        if poly.norm_sq_jet(tk).d2 >= 0.0 {
            near_concave = false;
        }
        for j in 0..np {
            let off = -near + 2.0 * near * j as f64 / (np - 1) as f64;
            if off.abs() < exclusion {
                continue;
            }
            let t = (tk + off).rem_euclid(1.0);
            let jet = poly.norm_sq_jet(t);
            let v = jet.value.sqrt();
            if jet.d2 >= 0.0 {
                near_concave = false;
            }
            if dist(t) >= exclusion {
                off_max = off_max.max(v);
            }
            let x = mf * mf * off * off;
            sxy += x * (1.0 - v);
            sxx += x * x;
        }
        near_decay.push(if sxx > 0.0 { sxy / sxx } else { f64::NAN });
    }

    let pass = off_max < 1.0 && near_concave && interp < opts.interpolation_tol && deriv < opts.interpolation_tol;
    ValidationReport {
        m,
        k,
        l: ws.subspace.l(),
        interpolation_residual: interp,
        derivative_residual: deriv,
        solve_residual: ws.solve_residual,
        condition: ws.condition,
        off_support_max: off_max,
        far_max,
        near_concave,
        near_decay,
        pass,
        failure: None,
    }
}

/// Builds and validates in one step; construction failures become a failed
/// report rather than an error.
pub fn certify(
    table: &FejerTable,
    subspace: &SubspaceModel,
    delays: &[f64],
    signs: &[C64],
    h: &DVector<C64>,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    match CertificateWorkspace::new(table, subspace, delays, signs, h) {
        Ok(ws) => Ok(validate_certificate(&ws, opts)),
        Err(Error::Degenerate(why)) => Ok(ValidationReport::failed(table.m, delays.len(), subspace.l(), why)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaStats {
    /// ‖Γ − Φ⊗I_L‖ per trial.
    pub deviations: Vec<f64>,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

/// Spread of ‖Γ − Φ⊗I_L‖ over independent subspace draws.
pub fn gamma_concentration_stats(
    table: &FejerTable,
    kind: SubspaceKind,
    l: usize,
    delays: &[f64],
    trials: usize,
    seed: u64,
) -> Result<GammaStats> {
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let phi = build_phi(table, delays, Route::Blocks)?;
    let mean = phi.kronecker(&DMatrix::<C64>::identity(l, l));
    let mut deviations = Vec::with_capacity(trials);
    for t in 0..trials {
        let b = sample_subspace(kind, table.n(), l, derive_seed(seed, "gamma", t as u64))?;
        let g = build_gamma(table, &b, delays, Route::Blocks)?;
        let d = dense::hermitian_eigenvalues(&(g - &mean))?;
        deviations.push(d.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    }
    let mut sorted = deviations.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).ceil() as usize).min(sorted.len() - 1)];
    Ok(GammaStats { median: q(0.5), p95: q(0.95), max: *sorted.last().unwrap(), deviations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::signal::{draw_separated_spikes, AmplitudeSpec, Indexing, ProblemInstance, SpikeSignal};
    use proptest::prelude::*;
    use rand::Rng;

    fn unit(v: C64) -> C64 {
        v / v.norm()
    }

    #[test]
    fn m1_table() {
        let t = fejer_coeffs(1).unwrap();
        assert_eq!(t.s, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(fejer_coeffs(0).is_err());
    }

    #[test]
    fn table_identities() {
        for m in [1usize, 4, 16, 64, 128, 256] {
            let t = fejer_coeffs(m).unwrap();
            let sum: f64 = t.s.iter().sum();
            assert!((sum - m as f64).abs() < 1e-12 * m as f64);
            for i in 0..t.s.len() {
                assert_eq!(t.s[i], t.s[t.s.len() - 1 - i]);
                assert!(t.s[i] >= 0.0);
            }
            assert!((kernel_eval(&t, 0, 0.0).unwrap() - 1.0).norm() < 1e-12);
            assert!(kernel_eval(&t, 1, 0.0).unwrap().norm() < 1e-12);
            if m == 1 {
                // K is constant, so there is no curvature to normalize.
                assert!(t.kappa.is_infinite());
                continue;
            }
            let k2 = kernel_eval(&t, 2, 0.0).unwrap();
            assert!(k2.re < 0.0);
            assert!((t.kappa * t.kappa * k2.norm() - 1.0).abs() < 1e-12);
        }
        assert!(kernel_eval(&fejer_coeffs(4).unwrap(), 4, 0.0).is_err());
    }

    #[test]
    fn m64_unimodal() {
        let t = fejer_coeffs(64).unwrap();
        let c = 128;
        for i in 0..c {
            assert!(t.s[i] <= t.s[i + 1]);
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let t = fejer_coeffs(8).unwrap();
        let h = 1e-6;
        for tau in [0.01, 0.2, 0.47] {
            for m in 0..3 {
                let fd = (kernel_eval(&t, m, tau + h).unwrap() - kernel_eval(&t, m, tau - h).unwrap()) / (2.0 * h);
                let an = kernel_eval(&t, m + 1, tau).unwrap();
                assert!((fd - an).norm() < 1e-6 * an.norm().max(1.0));
            }
        }
    }

    #[test]
    fn scalar_reduction_of_matrix_kernel() {
        let t = fejer_coeffs(8).unwrap();
        let ones = SubspaceModel::ones(t.n(), 1).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let tau: f64 = rng.random();
            for m in 0..3 {
                let a = matrix_kernel_eval(&t, &ones, m, tau).unwrap()[(0, 0)];
                let b = kernel_eval(&t, m, tau).unwrap();
                assert!((a - b).norm() < 1e-13 * b.norm().max(1.0));
            }
        }
        assert!(matches!(
            matrix_kernel_eval(&t, &SubspaceModel::ones(t.n() + 1, 1).unwrap(), 0, 0.0),
            Err(Error::Convention(_))
        ));
    }

    #[test]
    fn matrix_kernel_at_zero_is_psd() {
        let t = fejer_coeffs(8).unwrap();
        let b = sample_subspace(SubspaceKind::FourierRow, t.n(), 3, 2).unwrap();
        let k0 = matrix_kernel_eval(&t, &b, 0, 0.0).unwrap();
        assert!((&k0 - k0.adjoint()).norm() < 1e-14);
        assert!(k0.symmetric_eigen().eigenvalues.iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn matrix_kernel_mean_over_draws() {
        let t = fejer_coeffs(8).unwrap();
        let l = 3;
        let taus = [0.0, 0.03];
        for &tau in &taus {
            for m in 0..2 {
                let mut acc = DMatrix::<C64>::zeros(l, l);
                for s in 0..500 {
                    let b = sample_subspace(SubspaceKind::FourierRow, t.n(), l, s).unwrap();
                    acc += matrix_kernel_eval(&t, &b, m, tau).unwrap();
                }
                acc /= C64::new(500.0, 0.0);
                let k = kernel_eval(&t, m, tau).unwrap();
                let scale = if m == 0 { 1.0 } else { 1.0 / t.kappa };
                let expect = DMatrix::<C64>::identity(l, l) * k;
                let dev = (acc - expect).iter().fold(0.0f64, |mx, v| mx.max(v.norm()));
                assert!(dev < 0.05 * scale, "tau={tau} m={m}: {dev}");
            }
        }
    }

    #[test]
    fn phi_single_spike_is_identity() {
        let t = fejer_coeffs(16).unwrap();
        for route in [Route::Blocks, Route::Kronecker] {
            let phi = build_phi(&t, &[0.3], route).unwrap();
            assert!((phi - DMatrix::<C64>::identity(2, 2)).norm() < 1e-12);
        }
    }

    #[test]
    fn routes_agree() {
        let t = fejer_coeffs(16).unwrap();
        let d = [0.1, 0.4, 0.75];
        let a = build_phi(&t, &d, Route::Blocks).unwrap();
        let b = build_phi(&t, &d, Route::Kronecker).unwrap();
        assert!((&a - &b).norm() < 1e-12 * a.norm());
        assert!((&a - a.adjoint()).norm() < 1e-13);
        let sub = sample_subspace(SubspaceKind::FourierRow, t.n(), 3, 5).unwrap();
        let ga = build_gamma(&t, &sub, &d, Route::Blocks).unwrap();
        let gb = build_gamma(&t, &sub, &d, Route::Kronecker).unwrap();
        assert!((&ga - &gb).norm() < 1e-12 * ga.norm());
        assert!((&ga - ga.adjoint()).norm() < 1e-12 * ga.norm());
        assert!((0..ga.nrows()).all(|i| ga[(i, i)].im.abs() < 1e-12));
        let ones = SubspaceModel::ones(t.n(), 1).unwrap();
        assert!((build_gamma(&t, &ones, &d, Route::Blocks).unwrap() - a).norm() < 1e-14);
    }

    #[test]
    fn two_far_spikes_satisfy_phi_bounds() {
        let t = fejer_coeffs(64).unwrap();
        let n = phi_norms(&build_phi(&t, &[0.2, 0.7], Route::Blocks).unwrap()).unwrap();
        assert!(n.deviation <= 0.3623);
    }

    #[test]
    fn phi_exchange_symmetry() {
        let t = fejer_coeffs(16).unwrap();
        let a = build_phi(&t, &[0.1, 0.5, 0.8], Route::Blocks).unwrap();
        let b = build_phi(&t, &[0.5, 0.8, 0.1], Route::Blocks).unwrap();
        // Same spectrum under relabeling.
        let ea = a.symmetric_eigen().eigenvalues;
        let eb = b.symmetric_eigen().eigenvalues;
        let mut va: Vec<f64> = ea.iter().copied().collect();
        let mut vb: Vec<f64> = eb.iter().copied().collect();
        va.sort_by(f64::total_cmp);
        vb.sort_by(f64::total_cmp);
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spike_certificate_is_the_kernel() {
        let t = fejer_coeffs(8).unwrap();
        let ones = SubspaceModel::ones(t.n(), 1).unwrap();
        let h = DVector::from_element(1, C64::new(1.0, 0.0));
        let ws = CertificateWorkspace::new(&t, &ones, &[0.4], &[C64::new(1.0, 0.0)], &h).unwrap();
        assert!((ws.alpha[0][0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(ws.beta[0][0].norm() < 1e-12);
        for tau in [0.1, 0.4, 0.77] {
            let q = certificate_eval(&ws, 0, tau).unwrap()[0];
            assert!((q - kernel_eval(&t, 0, tau - 0.4).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn symmetric_support_has_equal_alphas() {
        let t = fejer_coeffs(16).unwrap();
        let ones = SubspaceModel::ones(t.n(), 1).unwrap();
        let h = DVector::from_element(1, C64::new(1.0, 0.0));
        let s = [C64::new(1.0, 0.0); 2];
        let ws = CertificateWorkspace::new(&t, &ones, &[0.25, 0.75], &s, &h).unwrap();
        assert!((ws.alpha[0][0] - ws.alpha[1][0]).norm() < 1e-12);
    }

    fn random_workspace(m: usize, l: usize, k: usize, seed: u64) -> CertificateWorkspace {
        let t = fejer_coeffs(m).unwrap();
        let sub = sample_subspace(SubspaceKind::FourierRow, t.n(), l, seed).unwrap();
        let spikes = draw_separated_spikes(k, 1.5 / m as f64, &AmplitudeSpec::default(), seed).unwrap();
        let signs: Vec<C64> = spikes.amplitudes().iter().map(|a| unit(*a)).collect();
        let h = crate::signal::draw_noise(l, 1.0, seed + 1);
        CertificateWorkspace::new(&t, &sub, spikes.delays(), &signs, &h).unwrap()
    }

    #[test]
    fn interpolation_conditions_hold() {
        let ws = random_workspace(16, 3, 3, 4);
        assert!(ws.solve_residual < 1e-10);
        for kk in 0..3 {
            let q = certificate_eval(&ws, 0, ws.delays[kk]).unwrap();
            assert!((q - ws.target(kk)).norm() < 1e-9);
            let dq = certificate_eval(&ws, 1, ws.delays[kk]).unwrap();
            assert!(dq.norm() < 1e-8);
        }
    }

    #[test]
    fn kernel_sum_agrees_with_implied_dual_form() {
        let ws = random_workspace(16, 2, 3, 9);
        let q = ws.implied_dual();
        let n = ws.table.n();
        let cert = crate::lifting::lift_adjoint(&q, &ws.subspace).unwrap();
        for tau in [0.0, 0.123, 0.5, 0.987] {
            let a = certificate_eval(&ws, 0, tau).unwrap();
            let c = crate::signal::steering_vector(tau, n, Indexing::Symmetric).unwrap();
            let b = cert.adjoint() * c;
            assert!((&a - &b).norm() < 1e-12, "{}", (&a - &b).norm());
            let p = ws.poly().eval(tau);
            assert!((&a - p).norm() < 1e-12);
        }
    }

    #[test]
    fn valid_certificate_proves_optimality() {
        // Re⟨X*(q), Z*⟩ equals the atomic decomposition cost, so the
        // decomposition is optimal when ‖Q‖ ≤ 1.
        let ws = random_workspace(16, 2, 3, 12);
        let rep = validate_certificate(&ws, &ValidationOptions::default());
        assert!(rep.pass, "{rep:?}");
        let n = ws.table.n();
        let amps: Vec<C64> = ws.signs.iter().enumerate().map(|(i, s)| s * (1.0 + i as f64)).collect();
        let spikes = SpikeSignal::new(ws.delays.clone(), amps.clone()).unwrap();
        let h = &ws.h * C64::new(ws.h_scale, 0.0);
        let inst = ProblemInstance::synthesize(spikes, ws.subspace.clone(), h.clone(), None, 0.0, Indexing::Symmetric)
            .unwrap();
        let q = ws.implied_dual();
        let ip: C64 = inst.y.iter().zip(q.iter()).map(|(y, q)| y.conj() * q).sum();
        let cost = (n as f64).sqrt() * amps.iter().map(|a| a.norm()).sum::<f64>() * h.norm();
        assert!((ip.re - cost).abs() < 1e-9 * cost, "{} {}", ip.re, cost);
    }

    #[test]
    fn deterministic_scalar_case_passes() {
        for m in [16usize, 64] {
            let t = fejer_coeffs(m).unwrap();
            let ones = SubspaceModel::ones(t.n(), 1).unwrap();
            let d = [0.2, 0.2 + 1.5 / m as f64, 0.2 + 3.0 / m as f64];
            let s = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0)];
            let h = DVector::from_element(1, C64::new(1.0, 0.0));
            let rep = certify(&t, &ones, &d, &s, &h, &ValidationOptions::default()).unwrap();
            assert!(rep.pass, "{rep:?}");
            assert!(rep.far_max <= FAR_LEVEL, "{}", rep.far_max);
            assert!(rep.near_decay.iter().all(|c| *c > 0.0));
        }
    }

    #[test]
    fn violated_separation_fails() {
        let m = 64;
        let t = fejer_coeffs(m).unwrap();
        let ones = SubspaceModel::ones(t.n(), 1).unwrap();
        let d = [0.3, 0.3 + 0.2 / m as f64];
        let s = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
        let h = DVector::from_element(1, C64::new(1.0, 0.0));
        let rep = certify(&t, &ones, &d, &s, &h, &ValidationOptions::default()).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn gamma_deviation_vanishes_for_ones() {
        let t = fejer_coeffs(8).unwrap();
        let phi = build_phi(&t, &[0.1, 0.6], Route::Blocks).unwrap();
        let g = build_gamma(&t, &SubspaceModel::ones(t.n(), 1).unwrap(), &[0.1, 0.6], Route::Blocks).unwrap();
        assert_eq!((g - phi).norm(), 0.0);
        let stats = gamma_concentration_stats(&t, SubspaceKind::FourierRow, 1, &[0.1, 0.6], 5, 1).unwrap();
        // One-dimensional fourier rows are all ones.
        assert!(stats.max < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn routes_agree_random(seed in 0u64..10_000, k in 1usize..4, l in 1usize..4) {
            let t = fejer_coeffs(8).unwrap();
            let sp = draw_separated_spikes(k, 1.0 / 8.0, &AmplitudeSpec::default(), seed).unwrap();
            let sub = sample_subspace(SubspaceKind::ComplexGaussian, t.n(), l, seed).unwrap();
            let a = build_gamma(&t, &sub, sp.delays(), Route::Blocks).unwrap();
            let b = build_gamma(&t, &sub, sp.delays(), Route::Kronecker).unwrap();
            prop_assert!((&a - &b).norm() <= 1e-12 * a.norm());
        }
    }
}
