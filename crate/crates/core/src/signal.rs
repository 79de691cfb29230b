//! Spike signals, subspace PSF models and Fourier-domain measurement synthesis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{cjson, C64};

/// Rejection attempts before the separated-delay sampler switches to the
/// constructive gap sampler.
const MAX_REJECTION_ATTEMPTS: usize = 100_000;

/// How the N Fourier samples are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Indexing {
    /// n ∈ {−2M, …, 2M}, N = 4M + 1.
    Symmetric,
    /// n ∈ {0, …, N − 1}.
    Shifted,
}

impl Indexing {
    pub fn validate(self, n: usize) -> Result<()> {
        match self {
            Indexing::Symmetric if n % 4 != 1 => {
                Err(Error::Convention(format!("symmetric indexing needs N = 4M + 1, got N = {n}")))
            }
            Indexing::Shifted if n < 2 => Err(Error::Convention(format!("shifted indexing needs N >= 2, got N = {n}"))),
            _ => Ok(()),
        }
    }

    /// Frequency index of the first sample.
    pub fn first_index(self, n: usize) -> i64 {
        match self {
            Indexing::Symmetric => -((n as i64 - 1) / 2),
            Indexing::Shifted => 0,
        }
    }

    pub fn indices(self, n: usize) -> impl Iterator<Item = i64> {
        let first = self.first_index(n);
        (0..n as i64).map(move |m| first + m)
    }

    /// M such that N = 4M + 1, for the symmetric grid.
    pub fn half_bandwidth(self, n: usize) -> Option<usize> {
        match self {
            Indexing::Symmetric if n % 4 == 1 => Some((n - 1) / 4),
            _ => None,
        }
    }
}

/// Ground-truth sparse spike train: normalized delays in [0, 1) and complex
/// amplitudes (time-domain scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpikeSignalRepr", into = "SpikeSignalRepr")]
pub struct SpikeSignal {
    delays: Vec<f64>,
    amplitudes: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct SpikeSignalRepr {
    delays: Vec<f64>,
    #[serde(with = "cjson::vec")]
    amplitudes: Vec<C64>,
}

impl TryFrom<SpikeSignalRepr> for SpikeSignal {
    type Error = Error;

    fn try_from(r: SpikeSignalRepr) -> Result<Self> {
        SpikeSignal::new(r.delays, r.amplitudes)
    }
}

impl From<SpikeSignal> for SpikeSignalRepr {
    fn from(s: SpikeSignal) -> Self {
        SpikeSignalRepr { delays: s.delays, amplitudes: s.amplitudes }
    }
}

impl SpikeSignal {
    pub fn new(delays: Vec<f64>, amplitudes: Vec<C64>) -> Result<Self> {
        if delays.len() != amplitudes.len() {
            return Err(Error::domain(format!("{} delays but {} amplitudes", delays.len(), amplitudes.len())));
        }
        if let Some(t) = delays.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::domain(format!("delay {t} outside [0, 1)")));
        }
        for (i, a) in delays.iter().enumerate() {
            if delays[i + 1..].contains(a) {
                return Err(Error::domain(format!("delay {a} repeated")));
            }
        }
        Ok(SpikeSignal { delays, amplitudes })
    }

    pub fn empty() -> Self {
        SpikeSignal { delays: Vec::new(), amplitudes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Amplitudes on the atomic scale, a_k = √N · ā_k.
    pub fn atomic_amplitudes(&self, n: usize) -> Vec<C64> {
        let s = (n as f64).sqrt();
        self.amplitudes.iter().map(|a| a * s).collect()
    }

    /// Spikes of `self` followed by those of `other`.
    pub fn concat(&self, other: &SpikeSignal) -> Result<SpikeSignal> {
        let mut d = self.delays.clone();
        d.extend_from_slice(&other.delays);
        let mut a = self.amplitudes.clone();
        a.extend_from_slice(&other.amplitudes);
        SpikeSignal::new(d, a)
    }
}

/// Distribution of the rows b_n of the subspace matrix B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceKind {
    /// b_n = [1, e^{j2πf_n}, …, e^{j2π(L−1)f_n}], f_n uniform on [0, 1).
    FourierRow,
    /// Circularly-symmetric entries, real and imaginary parts of variance 1/2.
    ComplexGaussian,
    /// Real standard normal entries.
    RealGaussian,
    /// User supplied matrix.
    Explicit,
}

impl FromStr for SubspaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier-row" => Ok(SubspaceKind::FourierRow),
            "complex-gaussian" => Ok(SubspaceKind::ComplexGaussian),
            "real-gaussian" => Ok(SubspaceKind::RealGaussian),
            "explicit" => Ok(SubspaceKind::Explicit),
            other => Err(Error::config(format!("unknown subspace kind `{other}`"))),
        }
    }
}

impl fmt::Display for SubspaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubspaceKind::FourierRow => "fourier-row",
            SubspaceKind::ComplexGaussian => "complex-gaussian",
            SubspaceKind::RealGaussian => "real-gaussian",
            SubspaceKind::Explicit => "explicit",
        };
        f.write_str(s)
    }
}

/// Known N×L subspace containing the PSF spectrum, g = B h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    #[serde(with = "cjson::dmatrix")]
    matrix: DMatrix<C64>,
    kind: SubspaceKind,
    /// max_{n,i} |B_{n,i}|².
    coherence: f64,
    /// False when `coherence` is only the empirical maximum of an unbounded
    /// (Gaussian) row law; incoherence-based guarantees do not apply then.
    coherence_is_bound: bool,
}

impl SubspaceModel {
    pub fn from_matrix(matrix: DMatrix<C64>, kind: SubspaceKind) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.ncols() > matrix.nrows() {
            return Err(Error::domain(format!(
                "subspace must satisfy 1 <= L <= N, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let coherence = matrix.iter().map(|b| b.norm_sqr()).fold(0.0, f64::max);
        let coherence_is_bound = matches!(kind, SubspaceKind::FourierRow);
        Ok(SubspaceModel { matrix, kind, coherence, coherence_is_bound })
    }

    pub fn explicit(matrix: DMatrix<C64>) -> Result<Self> {
        Self::from_matrix(matrix, SubspaceKind::Explicit)
    }

    /// B with every entry equal to one (L columns).
    pub fn ones(n: usize, l: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::from_element(n, l, C64::new(1.0, 0.0)), SubspaceKind::Explicit)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn coherence(&self) -> f64 {
        self.coherence
    }

    pub fn coherence_is_bound(&self) -> bool {
        self.coherence_is_bound
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn l(&self) -> usize {
        self.matrix.ncols()
    }

    /// Row b_n as a column vector.
    pub fn row(&self, n: usize) -> DVector<C64> {
        self.matrix.row(n).transpose()
    }

    /// ‖b_n‖² for every row.
    pub fn row_norms_sqr(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().map(|b| b.norm_sqr()).sum()).collect()
    }
}

/// Amplitude law: modulus 10^{d/20} with d uniform on [0, dynamic_range_db],
/// phase uniform on [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpec {
    pub dynamic_range_db: f64,
}

impl Default for AmplitudeSpec {
    fn default() -> Self {
        AmplitudeSpec { dynamic_range_db: 10.0 }
    }
}

impl AmplitudeSpec {
    pub fn draw(&self, rng: &mut impl rand::Rng) -> C64 {
        let db = rng.random::<f64>() * self.dynamic_range_db;
        let phase = rng.random::<f64>() * 2.0 * PI;
        C64::from_polar(10f64.powf(db / 20.0), phase)
    }
}

/// Fourier samples y of the convolution, with the subspace model and the
/// optional ground truth that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(with = "cjson::dvector")]
    pub y: DVector<C64>,
    pub subspace: SubspaceModel,
    pub noise_level: f64,
    pub indexing: Indexing,
    pub truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spikes: SpikeSignal,
    #[serde(with = "cjson::dvector")]
    pub h: DVector<C64>,
    #[serde(with = "cjson::dvector")]
    pub noise: DVector<C64>,
}

impl GroundTruth {
    /// Spectrum x of the spike train on the instance grid.
    pub fn spectrum(&self, n: usize, indexing: Indexing) -> Result<DVector<C64>> {
        synth_spike_spectrum(&self.spikes, n, indexing)
    }

    /// Lifted matrix Z* = x hᵀ.
    pub fn lifted(&self, n: usize, indexing: Indexing) -> Result<DMatrix<C64>> {
        let x = self.spectrum(n, indexing)?;
        Ok(&x * self.h.transpose())
    }
}

impl ProblemInstance {
    /// Wrap externally measured data.
    pub fn new(y: DVector<C64>, subspace: SubspaceModel, noise_level: f64, indexing: Indexing) -> Result<Self> {
        indexing.validate(y.len())?;
        if y.len() != subspace.n() {
            return Err(Error::domain(format!("y has {} samples but B has {} rows", y.len(), subspace.n())));
        }
        if !(noise_level >= 0.0) {
            return Err(Error::domain("noise level must be >= 0"));
        }
        Ok(ProblemInstance { y, subspace, noise_level, indexing, truth: None })
    }

    /// Synthesize y = diag(Bh)x + w from a ground truth.
    pub fn synthesize(
        spikes: SpikeSignal,
        subspace: SubspaceModel,
        h: DVector<C64>,
        noise: Option<DVector<C64>>,
        noise_level: f64,
        indexing: Indexing,
    ) -> Result<Self> {
        let n = subspace.n();
        indexing.validate(n)?;
        let x = synth_spike_spectrum(&spikes, n, indexing)?;
        let g = synth_psf(&subspace, &h)?;
        let noise = noise.unwrap_or_else(|| DVector::zeros(n));
        let y = measure(&g, &x, Some(&noise))?;
        let mut inst = ProblemInstance::new(y, subspace, noise_level, indexing)?;
        inst.truth = Some(GroundTruth { spikes, h, noise });
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn l(&self) -> usize {
        self.subspace.l()
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_level == 0.0
    }

    pub fn lifted_truth(&self) -> Option<Result<DMatrix<C64>>> {
        self.truth.as_ref().map(|t| t.lifted(self.n(), self.indexing))
    }
}

fn check_delay(tau: f64) -> Result<()> {
    if (0.0..1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::domain(format!("delay {tau} outside [0, 1)")))
    }
}

/// Unit-norm sinusoid c(τ) with entries e^{−j2πnτ}/√N over the grid indices.
pub fn steering_vector(tau: f64, n: usize, indexing: Indexing) -> Result<DVector<C64>> {
    check_delay(tau)?;
    indexing.validate(n)?;
    let scale = 1.0 / (n as f64).sqrt();
    Ok(DVector::from_iterator(n, indexing.indices(n).map(|k| C64::from_polar(scale, -2.0 * PI * k as f64 * tau))))
}

/// Fourier samples of the spike train, x_n = Σ_k ā_k e^{−j2πnτ_k}.
pub fn synth_spike_spectrum(spikes: &SpikeSignal, n: usize, indexing: Indexing) -> Result<DVector<C64>> {
    indexing.validate(n)?;
    let mut x = DVector::zeros(n);
    for (&tau, &a) in spikes.delays().iter().zip(spikes.amplitudes()) {
        for (xi, k) in x.iter_mut().zip(indexing.indices(n)) {
            *xi += a * C64::from_polar(1.0, -2.0 * PI * k as f64 * tau);
        }
    }
    Ok(x)
}

/// Draw a subspace matrix from one of the row laws. Deterministic in `seed`.
pub fn sample_subspace(kind: SubspaceKind, n: usize, l: usize, seed: u64) -> Result<SubspaceModel> {
    if l == 0 || l > n {
        return Err(Error::domain(format!("need 1 <= L <= N, got L = {l}, N = {n}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "subspace", 0));
    let matrix = match kind {
        SubspaceKind::FourierRow => {
            let mut b = DMatrix::zeros(n, l);
            for r in 0..n {
                let f: f64 = rng.random();
                for i in 0..l {
                    b[(r, i)] = C64::from_polar(1.0, 2.0 * PI * i as f64 * f);
                }
            }
            b
        }
        SubspaceKind::ComplexGaussian => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            DMatrix::from_fn(n, l, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * s, im * s)
            })
        }
        SubspaceKind::RealGaussian => DMatrix::from_fn(n, l, |_, _| C64::new(StandardNormal.sample(&mut rng), 0.0)),
        SubspaceKind::Explicit => return Err(Error::config("an explicit subspace cannot be sampled")),
    };
    SubspaceModel::from_matrix(matrix, kind)
}

/// PSF spectrum g = B h.
pub fn synth_psf(subspace: &SubspaceModel, h: &DVector<C64>) -> Result<DVector<C64>> {
    if h.len() != subspace.l() {
        return Err(Error::domain(format!("h has length {} but the subspace has L = {}", h.len(), subspace.l())));
    }
    Ok(subspace.matrix() * h)
}

/// y_n = g_n x_n + w_n.
pub fn measure(g: &DVector<C64>, x: &DVector<C64>, noise: Option<&DVector<C64>>) -> Result<DVector<C64>> {
    if g.len() != x.len() {
        return Err(Error::domain(format!("g has length {} but x has length {}", g.len(), x.len())));
    }
    let mut y = g.component_mul(x);
    if let Some(w) = noise {
        if w.len() != y.len() {
            return Err(Error::domain("noise length mismatch"));
        }
        y += w;
    }
    Ok(y)
}

/// Distance between two delays on the unit circle.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Minimum pairwise wrap-around distance; +∞ for fewer than two delays.
pub fn min_separation(delays: &[f64]) -> f64 {
    if delays.len() < 2 {
        return f64::INFINITY;
    }
    let mut sorted = delays.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gaps = sorted.windows(2).map(|w| w[1] - w[0]);
    let wrap = 1.0 - sorted[sorted.len() - 1] + sorted[0];
    gaps.chain(std::iter::once(wrap)).fold(f64::INFINITY, f64::min)
}

/// Draw K delays uniformly subject to a minimum wrap-around separation
/// (`min_sep = 0` disables the constraint), with amplitudes from `amps`.
pub fn draw_separated_spikes(k: usize, min_sep: f64, amps: &AmplitudeSpec, seed: u64) -> Result<SpikeSignal> {
    if !(min_sep >= 0.0) || k as f64 * min_sep >= 1.0 {
        return Err(Error::config(format!("cannot place {k} spikes with separation {min_sep} on the unit circle")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "spikes", 0));
    let mut delays = None;
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let cand: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        if min_separation(&cand) >= min_sep && distinct(&cand) {
            delays = Some(cand);
            break;
        }
    }
    let mut delays = delays.unwrap_or_else(|| gap_sampler(k, min_sep, &mut rng));
    delays.sort_by(f64::total_cmp);
    let amplitudes = (0..k).map(|_| amps.draw(&mut rng)).collect();
    SpikeSignal::new(delays, amplitudes)
}

fn distinct(d: &[f64]) -> bool {
    d.iter().enumerate().all(|(i, a)| !d[i + 1..].contains(a))
}

/// Constructive fallback: the K circular gaps are min_sep plus a uniformly
/// random share of the remaining slack.
fn gap_sampler(k: usize, min_sep: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
    let slack = 1.0 - k as f64 * min_sep;
    let mut cuts: Vec<f64> = (0..k.saturating_sub(1)).map(|_| rng.random()).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let offset: f64 = rng.random();
    let mut pos = offset;
    let mut out = Vec::with_capacity(k);
    for w in cuts.windows(2).take(k) {
        out.push(pos.rem_euclid(1.0));
        pos += min_sep + slack * (w[1] - w[0]);
    }
    out
}

/// Draw h with i.i.d. entries.
pub fn draw_coefficients(kind: CoefficientKind, l: usize, seed: u64) -> DVector<C64> {
    let mut rng = rng_from_seed(derive_seed(seed, "coefficients", 0));
    match kind {
        CoefficientKind::Ones => DVector::from_element(l, C64::new(1.0, 0.0)),
        CoefficientKind::RealGaussian => DVector::from_fn(l, |_, _| C64::new(StandardNormal.sample(&mut rng), 0.0)),
        CoefficientKind::ComplexGaussian => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            DVector::from_fn(l, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * s, im * s)
            })
        }
    }
}

/// Law of the PSF coefficient vector h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    Ones,
    RealGaussian,
    ComplexGaussian,
}

/// Circularly-symmetric complex Gaussian noise CN(0, σ²).
pub fn draw_noise(n: usize, sigma: f64, seed: u64) -> DVector<C64> {
    let mut rng = rng_from_seed(derive_seed(seed, "noise", 0));
    let s = sigma * std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * s, im * s)
    })
}

/// Time-domain rendering of a spectrum on `points` samples of [0, 1):
/// v(t) = Σ_n s_n e^{j2πnt} / N.
pub fn render_time_domain(spectrum: &DVector<C64>, indexing: Indexing, points: usize) -> Vec<C64> {
    let n = spectrum.len();
    (0..points)
        .map(|p| {
            let t = p as f64 / points as f64;
            indexing
                .indices(n)
                .zip(spectrum.iter())
                .map(|(k, s)| s * C64::from_polar(1.0, 2.0 * PI * k as f64 * t))
                .sum::<C64>()
                / n as f64
        })
        .collect()
}
