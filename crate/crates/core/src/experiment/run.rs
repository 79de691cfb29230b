use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{synthesize_trial, Cell, ExperimentConfig, Mode, NoiseSetting};
use crate::cjson;
use crate::error::{Error, Result};
use crate::localize::{
    dual_polynomial_curve, localize, match_spikes, normalized_error, LocalizationResult, MatchReport,
};
use crate::sdp::{solve, LiftedSolution};
use crate::signal::{render_time_domain, synth_psf, ProblemInstance};
use crate::C64;

/// Optional extras for a single run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Sample the dual polynomial norm on this many points.
    pub dual_points: Option<usize>,
    /// Render time-domain curves on this many points.
    pub plot_points: Option<usize>,
}

/// Inverse-DFT renderings on a uniform grid of [0, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDomain {
    pub t: Vec<f64>,
    #[serde(with = "cjson::vec")]
    pub psf: Vec<C64>,
    #[serde(with = "cjson::vec")]
    pub measurements: Vec<C64>,
    #[serde(with = "cjson::vec")]
    pub estimated_psf: Vec<C64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dual_norm: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub min_block_eig: f64,
    pub warnings: Vec<String>,
}

impl From<&LiftedSolution> for SolverSummary {
    fn from(s: &LiftedSolution) -> Self {
        SolverSummary {
            objective: s.objective,
            iterations: s.iterations,
            converged: s.converged,
            dual_norm: s.dual_norm,
            dual_objective: s.dual_objective,
            duality_gap: s.duality_gap,
            min_block_eig: s.min_block_eig,
            warnings: s.warnings.clone(),
        }
    }
}

/// Everything one pipeline pass produces. Contains no wall-clock data, so a
/// fixed seed gives an identical serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub cell: Cell,
    pub seed: u64,
    pub instance: ProblemInstance,
    pub solver: SolverSummary,
    /// ‖Ẑ − Z*‖_F / ‖Z*‖_F; absent when Z* = 0.
    pub normalized_error: Option<f64>,
    pub error_note: Option<String>,
    pub success: bool,
    pub localization: LocalizationResult,
    pub matching: MatchReport,
    /// (τ, ‖Q(τ)‖) samples.
    pub dual_curve: Option<Vec<(f64, f64)>>,
    pub time_domain: Option<TimeDomain>,
}

/// Generate, solve, localize and score the single cell of a run config.
/// Seeds follow the sweep layout, so a run reproduces trial 0 of the same cell.
pub fn run_instance(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    if cfg.mode != Mode::Run {
        return Err(Error::config("run_instance needs mode = run"));
    }
    cfg.validate()?;
    let cell = cfg.cells()[0];
    let seed = cell.trial_seed(cfg.seed, 0);
    let noise = match cfg.sigma {
        Some(s) => NoiseSetting::Sigma(s),
        None => cfg.snr_db.first().map_or(NoiseSetting::None, |&s| NoiseSetting::SnrDb(s)),
    };
    let inst = synthesize_trial(cfg, cell, seed, noise)?;
    run_on_instance(cfg, cell, seed, inst, opts)
}

pub(crate) fn run_on_instance(
    cfg: &ExperimentConfig,
    cell: Cell,
    seed: u64,
    inst: ProblemInstance,
    opts: &RunOptions,
) -> Result<RunReport> {
    let sol = solve(&inst, &cfg.solver)?;
    let Evaluation { normalized_error, error_note, success, localization, matching } = evaluate(cfg, &inst, &sol)?;
    let dual_curve = match opts.dual_points {
        Some(points) => Some(dual_polynomial_curve(&sol.p, &inst.subspace, inst.indexing, points)?),
        None => None,
    };
    let time_domain = match opts.plot_points {
        Some(points) => Some(render(&inst, &localization.h_hat, points)?),
        None => None,
    };
    Ok(RunReport {
        cell,
        seed,
        solver: SolverSummary::from(&sol),
        instance: inst,
        normalized_error,
        error_note,
        success,
        localization,
        matching,
        dual_curve,
        time_domain,
    })
}

pub(crate) struct Evaluation {
    pub normalized_error: Option<f64>,
    pub error_note: Option<String>,
    pub success: bool,
    pub localization: LocalizationResult,
    pub matching: MatchReport,
}

/// Score a solution against the instance's ground truth.
pub(crate) fn evaluate(cfg: &ExperimentConfig, inst: &ProblemInstance, sol: &LiftedSolution) -> Result<Evaluation> {
    let truth = inst.truth.as_ref().ok_or_else(|| Error::domain("scoring needs a synthesized instance"))?;
    let z_star = truth.lifted(inst.n(), inst.indexing)?;
    let (normalized_error, error_note) = if z_star.norm() == 0.0 {
        (None, Some("normalized error undefined: the true lifted matrix is zero".to_string()))
    } else {
        (Some(normalized_error(&sol.z_hat, &z_star)?), None)
    };
    let noisy = !inst.is_noiseless();
    let mut localization =
        localize(&sol.p, &sol.z_hat, &inst.subspace, inst.indexing, &cfg.localize, cfg.localize.peak_tol(noisy))?;
    let radius = cfg.match_radius / inst.n() as f64;
    let matching = match_spikes(&truth.spikes, &localization.delays, &localization.amplitudes, radius)?;
    if !truth.spikes.is_empty() {
        localization.beta = Some(matching.beta);
    }
    let success = match normalized_error {
        Some(e) => e < cfg.success_threshold,
        None => sol.z_hat.norm() == 0.0 && localization.delays.is_empty(),
    };
    Ok(Evaluation { normalized_error, error_note, success, localization, matching })
}

fn render(inst: &ProblemInstance, h_hat: &DVector<C64>, points: usize) -> Result<TimeDomain> {
    if points == 0 {
        return Err(Error::domain("need at least one plot point"));
    }
    let truth = inst.truth.as_ref().ok_or_else(|| Error::domain("rendering needs ground truth"))?;
    let g = synth_psf(&inst.subspace, &truth.h)?;
    let g_hat = synth_psf(&inst.subspace, h_hat)?;
    Ok(TimeDomain {
        t: (0..points).map(|i| i as f64 / points as f64).collect(),
        psf: render_time_domain(&g, inst.indexing, points),
        measurements: render_time_domain(&inst.y, inst.indexing, points),
        estimated_psf: render_time_domain(&g_hat, inst.indexing, points),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Preset;

    fn small() -> ExperimentConfig {
        ExperimentConfig { n: vec![32], k: vec![2], l: vec![2], ..ExperimentConfig::preset(Preset::Fig1) }
    }

    #[test]
    fn small_run_recovers() {
        let r = run_instance(&small(), &RunOptions::default()).unwrap();
        assert!(r.success, "{:?}", r.normalized_error);
        assert!(r.matching.all_found());
        assert!(r.matching.max_delay_error < 1e-4);
        assert!(r.dual_curve.is_none() && r.time_domain.is_none());
    }

    #[test]
    fn empty_signal_reports_undefined_error() {
        let cfg = ExperimentConfig { k: vec![0], ..small() };
        let r = run_instance(&cfg, &RunOptions::default()).unwrap();
        assert!(r.normalized_error.is_none());
        assert!(r.error_note.is_some());
        assert!(r.localization.delays.is_empty());
        assert_eq!(r.solver.objective, 0.0);
    }

    #[test]
    fn fixed_seed_reports_are_identical() {
        let opts = RunOptions { dual_points: Some(64), plot_points: Some(32) };
        let a = serde_json::to_string(&run_instance(&small(), &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run_instance(&small(), &opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn renderings_have_requested_length() {
        let opts = RunOptions { dual_points: Some(100), plot_points: Some(50) };
        let r = run_instance(&small(), &opts).unwrap();
        let td = r.time_domain.unwrap();
        assert_eq!(td.t.len(), 50);
        assert_eq!(td.psf.len(), 50);
        assert_eq!(r.dual_curve.unwrap().len(), 100);
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let cfg = ExperimentConfig { mode: Mode::Sweep, ..small() };
        assert!(matches!(run_instance(&cfg, &RunOptions::default()), Err(Error::Config(_))));
    }
}
