use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweep::median;
use super::{Cell, ExperimentConfig, Mode};
use crate::certificate::{
    build_gamma, build_phi, certify, fejer_coeffs, CertificateWorkspace, FejerTable, Route, ValidationReport,
};
use crate::dense;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::{
    draw_coefficients, draw_separated_spikes, sample_subspace, AmplitudeSpec, SpikeSignal, SubspaceModel,
};
use crate::C64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateTrial {
    pub cell: Cell,
    pub trial: usize,
    pub seed: u64,
    pub report: ValidationReport,
    /// ‖Γ − Φ⊗I_L‖ for this draw; NaN if Γ could not be built.
    pub gamma_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateCell {
    pub cell: Cell,
    pub trials: usize,
    pub passes: usize,
    pub median_off_support_max: f64,
    pub median_far_max: f64,
    pub median_gamma_deviation: f64,
    pub max_gamma_deviation: f64,
    pub seed_base: u64,
}

impl CertificateCell {
    pub fn pass_rate(&self) -> f64 {
        self.passes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateCampaign {
    pub cells: Vec<CertificateCell>,
    pub trials: Vec<CertificateTrial>,
}

impl CertificateCampaign {
    pub fn cell(&self, m: usize, k: usize, l: usize) -> Option<&CertificateCell> {
        self.cells.iter().find(|c| c.cell == Cell { size: m, k, l })
    }
}

/// Build and validate the Fejér-kernel certificate on random supports for
/// every (M, K, L) cell. Construction failures count as failed certificates.
pub fn certificate_campaign(cfg: &ExperimentConfig) -> Result<CertificateCampaign> {
    if cfg.mode != Mode::Certify {
        return Err(Error::config("certificate_campaign needs mode = certify"));
    }
    cfg.validate()?;
    let cells = cfg.cells();
    let tasks: Vec<(Cell, usize)> = cells.iter().flat_map(|&c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let trials: Vec<CertificateTrial> = cfg.pool()?.install(|| {
        tasks
            .par_iter()
            .map(|&(c, t)| {
                let table = fejer_coeffs(c.size)?;
                run_trial(cfg, &table, c, t)
            })
            .collect::<Result<_>>()
    })?;
    let summaries = cells
        .iter()
        .map(|&c| {
            let rs: Vec<&CertificateTrial> = trials.iter().filter(|t| t.cell == c).collect();
            aggregate(c, c.seed_base(cfg.seed), &rs)
        })
        .collect();
    Ok(CertificateCampaign { cells: summaries, trials })
}

struct TrialInputs {
    spikes: SpikeSignal,
    signs: Vec<C64>,
    subspace: SubspaceModel,
    h: DVector<C64>,
}

fn trial_inputs(cfg: &ExperimentConfig, table: &FejerTable, cell: Cell, seed: u64) -> Result<TrialInputs> {
    let spikes = tight_support(cell.k, cfg.separation.min_sep(cell.size), &cfg.amplitudes, seed)?;
    let signs = spikes.amplitudes().iter().map(|a| a / a.norm()).collect();
    let subspace = sample_subspace(cfg.subspace, table.n(), cell.l, seed)?;
    let h = draw_coefficients(cfg.h, cell.l, seed);
    Ok(TrialInputs { spikes, signs, subspace, h })
}

/// Rebuild the certificate of one campaign trial, e.g. to plot it.
pub fn certificate_workspace(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> Result<CertificateWorkspace> {
    let table = fejer_coeffs(cell.size)?;
    let t = trial_inputs(cfg, &table, cell, cell.trial_seed(cfg.seed, trial))?;
    CertificateWorkspace::new(&table, &t.subspace, t.spikes.delays(), &t.signs, &t.h)
}

fn run_trial(cfg: &ExperimentConfig, table: &FejerTable, cell: Cell, trial: usize) -> Result<CertificateTrial> {
    let seed = cell.trial_seed(cfg.seed, trial);
    let TrialInputs { spikes, signs, subspace, h } = trial_inputs(cfg, table, cell, seed)?;
    let report = certify(table, &subspace, spikes.delays(), &signs, &h, &cfg.validation)?;
    let gamma_deviation = match (
        build_gamma(table, &subspace, spikes.delays(), Route::Blocks),
        build_phi(table, spikes.delays(), Route::Blocks),
    ) {
        (Ok(g), Ok(phi)) => {
            let mean = phi.kronecker(&DMatrix::<C64>::identity(cell.l, cell.l));
            dense::hermitian_eigenvalues(&(g - mean))?.iter().fold(0.0f64, |m, e| m.max(e.abs()))
        }
        _ => f64::NAN,
    };
    Ok(CertificateTrial { cell, trial, seed, report, gamma_deviation })
}

/// Random support whose minimum wrap-around separation is exactly `delta`:
/// K−1 points with gaps ≥ Δ on a circle of length 1−Δ, one of them split
/// into a pair Δ apart, then a uniform rotation.
pub(crate) fn tight_support(k: usize, delta: f64, amps: &AmplitudeSpec, seed: u64) -> Result<SpikeSignal> {
    if k < 2 || delta == 0.0 {
        return draw_separated_spikes(k, delta, amps, seed);
    }
    let base = draw_separated_spikes(k - 1, delta / (1.0 - delta), amps, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, "tight-support", 0));
    let split = rng.random_range(0..k - 1);
    let pivot = base.delays()[split] * (1.0 - delta);
    let shift: f64 = rng.random();
    let mut pts: Vec<(f64, C64)> = Vec::with_capacity(k);
    for (&d, &a) in base.delays().iter().zip(base.amplitudes()) {
        let d = d * (1.0 - delta);
        pts.push((if d > pivot { d + delta } else { d }, a));
    }
    pts.push((pivot + delta, amps.draw(&mut rng)));
    let mut pts: Vec<(f64, C64)> = pts.into_iter().map(|(d, a)| ((d + shift).rem_euclid(1.0), a)).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    SpikeSignal::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())
}

fn aggregate(cell: Cell, seed_base: u64, rs: &[&CertificateTrial]) -> CertificateCell {
    let mut rs = rs.to_vec();
    rs.sort_by_key(|r| r.trial);
    let sorted = |f: &dyn Fn(&CertificateTrial) -> f64| {
        let mut v: Vec<f64> = rs.iter().map(|r| f(r)).filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let dev = sorted(&|r| r.gamma_deviation);
    CertificateCell {
        cell,
        trials: rs.len(),
        passes: rs.iter().filter(|r| r.report.pass).count(),
        median_off_support_max: median(&sorted(&|r| r.report.off_support_max)),
        median_far_max: median(&sorted(&|r| r.report.far_max)),
        median_gamma_deviation: median(&dev),
        max_gamma_deviation: dev.last().copied().unwrap_or(f64::NAN),
        seed_base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Separation;
    use crate::signal::{min_separation, CoefficientKind, SubspaceKind};
    use proptest::prelude::*;

    fn cfg(m: usize, l: usize, sep: f64) -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Certify,
            m: vec![m],
            k: vec![3],
            l: vec![l],
            trials: 3,
            separation: Separation::Enforced(sep),
            subspace: SubspaceKind::FourierRow,
            h: CoefficientKind::Ones,
            ..Default::default()
        }
    }

    #[test]
    fn scalar_cells_pass() {
        let r = certificate_campaign(&cfg(16, 1, 1.5)).unwrap();
        let c = r.cell(16, 3, 1).unwrap();
        assert_eq!(c.passes, 3, "{:?}", r.trials.iter().map(|t| &t.report.failure).collect::<Vec<_>>());
        // With L=1 and b ≡ 1, Γ equals Φ exactly.
        assert!(c.max_gamma_deviation < 1e-12);
    }

    proptest! {
        #[test]
        fn tight_support_hits_the_separation(seed in 0u64..100_000, k in 1usize..8, m in 8usize..64) {
            let delta = 1.5 / m as f64;
            prop_assume!(k as f64 * delta < 1.0);
            let s = tight_support(k, delta, &AmplitudeSpec::default(), seed).unwrap();
            prop_assert_eq!(s.len(), k);
            if k >= 2 {
                prop_assert!((min_separation(s.delays()) - delta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn workspace_matches_campaign_trial() {
        let c = cfg(16, 2, 1.5);
        let r = certificate_campaign(&c).unwrap();
        let ws = certificate_workspace(&c, c.cells()[0], 1).unwrap();
        let again = crate::certificate::validate_certificate(&ws, &c.validation);
        assert_eq!(again.off_support_max, r.trials[1].report.off_support_max);
    }

    #[test]
    fn crowded_supports_fail() {
        let r = certificate_campaign(&cfg(16, 1, 0.2)).unwrap();
        assert_eq!(r.cells[0].passes, 0);
    }
}
