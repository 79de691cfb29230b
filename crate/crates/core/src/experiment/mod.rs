//! Experiment harness: single runs, Monte Carlo sweeps, noisy localization and
//! certificate campaigns driven by one JSON configuration.
//!
//! Every trial draws its randomness from a seed derived from the master seed
//! and the trial's coordinates, so results do not depend on the worker count
//! or on scheduling order.

mod certify;
mod noisy;
pub mod output;
mod run;
mod sweep;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certificate::ValidationOptions;
use crate::error::{Error, Result};
use crate::localize::LocalizeOptions;
use crate::rng::derive_seed;
use crate::sdp::SolverOptions;
use crate::signal::{
    draw_coefficients, draw_noise, draw_separated_spikes, sample_subspace, synth_psf, synth_spike_spectrum,
    AmplitudeSpec, CoefficientKind, Indexing, ProblemInstance, SubspaceKind,
};

pub use certify::{
    certificate_campaign, certificate_workspace, CertificateCampaign, CertificateCell, CertificateTrial,
};
pub use noisy::{noisy_localization_experiment, NoisyPoint, NoisyReport, NoisyTrial};
pub use run::{run_instance, RunOptions, RunReport, TimeDomain};
pub use sweep::{aggregate_cell, phase_transition_sweep, CellSummary, SweepResult, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    Sweep,
    Noisy,
    Certify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// N=64, fourier-row subspace with L=3, all-ones h, K=6, Δ ≥ 1/N.
    Fig1,
    /// N=64 phase surface over K ∈ 1..=12, L ∈ 1..=8 with Gaussian B and h.
    Fig2,
}

/// Minimum wrap-around separation imposed on random supports, in units of
/// 1/N (1/M for certificate campaigns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Separation {
    Enforced(f64),
    Unconstrained,
}

impl Separation {
    pub fn min_sep(self, size: usize) -> f64 {
        match self {
            Separation::Enforced(f) => f / size as f64,
            Separation::Unconstrained => 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub preset: Option<Preset>,
    /// Sample counts for run, sweep and noisy modes.
    pub n: Vec<usize>,
    /// Kernel orders for certificate campaigns (N = 4M+1).
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub l: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub subspace: SubspaceKind,
    pub h: CoefficientKind,
    pub amplitudes: AmplitudeSpec,
    pub separation: Separation,
    pub indexing: Indexing,
    /// Noise standard deviation; takes precedence over `snr_db`.
    pub sigma: Option<f64>,
    /// SNR points in dB, 10·log10(‖X(Z*)‖²/(Nσ²)).
    pub snr_db: Vec<f64>,
    /// Success iff the normalized error is strictly below this.
    pub success_threshold: f64,
    /// Spike matching radius in units of 1/N.
    pub match_radius: f64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub solver: SolverOptions,
    pub localize: LocalizeOptions,
    pub validation: ValidationOptions,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Run,
            preset: None,
            n: vec![64],
            m: vec![16, 32, 64, 128],
            k: vec![6],
            l: vec![3],
            trials: 20,
            seed: 0,
            subspace: SubspaceKind::FourierRow,
            h: CoefficientKind::Ones,
            amplitudes: AmplitudeSpec::default(),
            separation: Separation::Enforced(1.0),
            indexing: Indexing::Shifted,
            sigma: None,
            snr_db: Vec::new(),
            success_threshold: 1e-3,
            match_radius: 0.5,
            jobs: 1,
            solver: SolverOptions::default(),
            localize: LocalizeOptions::default(),
            validation: ValidationOptions::default(),
            out: None,
        }
    }
}

/// One (N or M, K, L) grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub size: usize,
    pub k: usize,
    pub l: usize,
}

impl Cell {
    /// Base seed of the cell; trial t uses `derive_seed(base, "trial", t)`.
    pub fn seed_base(&self, master: u64) -> u64 {
        derive_seed(master, &format!("cell/{}/{}/{}", self.size, self.k, self.l), 0)
    }

    pub fn trial_seed(&self, master: u64, trial: usize) -> u64 {
        derive_seed(self.seed_base(master), "trial", trial as u64)
    }
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let base = ExperimentConfig { preset: Some(p), ..Default::default() };
        match p {
            Preset::Fig1 => base,
            Preset::Fig2 => ExperimentConfig {
                mode: Mode::Sweep,
                k: (1..=12).collect(),
                l: (1..=8).collect(),
                subspace: SubspaceKind::RealGaussian,
                h: CoefficientKind::RealGaussian,
                ..base
            },
        }
    }

    /// Parse a JSON config. A `preset` key supplies defaults that the other
    /// keys override (nested objects are merged key by key).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("config JSON: {e}")))?;
        let value = match value.get("preset") {
            Some(Value::Null) | None => value,
            Some(p) => {
                let preset: Preset =
                    serde_json::from_value(p.clone()).map_err(|e| Error::config(format!("preset: {e}")))?;
                let mut base = serde_json::to_value(Self::preset(preset))?;
                merge(&mut base, value);
                base
            }
        };
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn sizes(&self) -> &[usize] {
        if self.mode == Mode::Certify {
            &self.m
        } else {
            &self.n
        }
    }

    /// Grid cells in (size, K, L) lexicographic order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &size in self.sizes() {
            for &k in &self.k {
                for &l in &self.l {
                    out.push(Cell { size, k, l });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let name = if self.mode == Mode::Certify { "m" } else { "n" };
        for (field, v) in [(name, self.sizes()), ("k", &self.k[..]), ("l", &self.l[..])] {
            if v.is_empty() {
                return Err(Error::config(format!("`{field}` must list at least one value")));
            }
        }
        if self.trials == 0 {
            return Err(Error::config("`trials` must be at least 1"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::config("`success_threshold` must be positive"));
        }
        if !(self.match_radius > 0.0) {
            return Err(Error::config("`match_radius` must be positive"));
        }
        if !(self.amplitudes.dynamic_range_db >= 0.0) {
            return Err(Error::config("amplitude dynamic range must be >= 0 dB"));
        }
        if let Separation::Enforced(f) = self.separation {
            if !(f > 0.0) {
                return Err(Error::config("enforced separation factor must be positive"));
            }
        }
        if self.mode == Mode::Run && self.cells().len() != 1 {
            return Err(Error::config("run mode takes exactly one (n, k, l) cell"));
        }
        if self.l.contains(&0) {
            return Err(Error::config("L must be at least 1"));
        }
        if matches!(self.mode, Mode::Sweep | Mode::Noisy | Mode::Certify) && self.k.contains(&0) {
            return Err(Error::config("sweeps need K >= 1; use run mode for the empty signal"));
        }
        for c in self.cells() {
            if c.size == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
            if self.mode == Mode::Certify {
                if self.subspace == SubspaceKind::Explicit {
                    return Err(Error::config("certificate campaigns need a random subspace kind"));
                }
            } else {
                self.indexing.validate(c.size).map_err(|e| Error::config(format!("N={}: {e}", c.size)))?;
                if c.l > c.size {
                    return Err(Error::config(format!("L={} exceeds N={}", c.l, c.size)));
                }
            }
            let sep = self.separation.min_sep(c.size);
            if c.k as f64 * sep >= 1.0 {
                return Err(Error::config(format!(
                    "cell ({}, {}, {}) is infeasible: K·Δ_min = {} >= 1",
                    c.size,
                    c.k,
                    c.l,
                    c.k as f64 * sep
                )));
            }
        }
        if self.subspace == SubspaceKind::Explicit {
            return Err(Error::config("experiments draw B at random; `explicit` is not a sampling law"));
        }
        if self.mode == Mode::Noisy {
            match self.sigma {
                Some(s) if !(s >= 0.0 && s.is_finite()) => {
                    return Err(Error::config("`sigma` must be finite and >= 0"));
                }
                None if self.snr_db.is_empty() => {
                    return Err(Error::config("noisy mode needs `sigma` or `snr_db`"));
                }
                _ => {}
            }
            if self.snr_db.iter().any(|s| !s.is_finite()) {
                return Err(Error::config("`snr_db` values must be finite"));
            }
        }
        Ok(())
    }

    /// Thread pool honouring `jobs`.
    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// ε = σ·√(N + 2√(N log N)): a high-probability bound on ‖w‖ for w ~ CN(0, σ²I).
pub fn noise_bound(sigma: f64, n: usize) -> f64 {
    let nf = n as f64;
    sigma * (nf + 2.0 * (nf * nf.ln()).sqrt()).sqrt()
}

/// σ giving the requested SNR for a clean measurement vector.
pub fn sigma_for_snr(clean_energy: f64, n: usize, snr_db: f64) -> f64 {
    (clean_energy / (n as f64 * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Noise applied to one synthesized trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSetting {
    None,
    Sigma(f64),
    SnrDb(f64),
}

/// Draw the instance of one trial. Spikes, subspace, h and the noise shape
/// depend only on `seed`, so SNR points of one trial share the clean signal.
pub fn synthesize_trial(cfg: &ExperimentConfig, cell: Cell, seed: u64, noise: NoiseSetting) -> Result<ProblemInstance> {
    let n = cell.size;
    let spikes = draw_separated_spikes(cell.k, cfg.separation.min_sep(n), &cfg.amplitudes, seed)?;
    let subspace = sample_subspace(cfg.subspace, n, cell.l, seed)?;
    let h = draw_coefficients(cfg.h, cell.l, seed);
    let sigma = match noise {
        NoiseSetting::None => 0.0,
        NoiseSetting::Sigma(s) => s,
        NoiseSetting::SnrDb(snr) => {
            let x = synth_spike_spectrum(&spikes, n, cfg.indexing)?;
            let g = synth_psf(&subspace, &h)?;
            let energy: f64 = x.iter().zip(g.iter()).map(|(x, g)| (x * g).norm_sqr()).sum();
            sigma_for_snr(energy, n, snr)
        }
    };
    let w = (sigma > 0.0).then(|| draw_noise(n, sigma, seed));
    ProblemInstance::synthesize(spikes, subspace, h, w, noise_bound(sigma, n), cfg.indexing)
}
