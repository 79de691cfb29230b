use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::evaluate;
use super::sweep::median;
use super::{sigma_for_snr, synthesize_trial, Cell, ExperimentConfig, Mode, NoiseSetting};
use crate::error::{Error, Result};
use crate::sdp::{solution_or_last, solve};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyTrial {
    pub cell: Cell,
    pub snr_db: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub sigma: f64,
    pub epsilon: f64,
    pub matched: usize,
    pub misses: usize,
    /// Peaks with no true spike within the match radius.
    pub spurious: usize,
    pub all_matched: bool,
    pub delay_errors: Vec<f64>,
    pub amplitude_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub time_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyPoint {
    pub cell: Cell,
    pub snr_db: Option<f64>,
    pub sigma: Option<f64>,
    pub trials: usize,
    /// Trials in which every true spike was matched.
    pub all_matched: usize,
    /// Median over all true spikes of the matched delay error; a missed
    /// spike counts as the match radius.
    pub median_delay_error: f64,
    pub mean_spurious: f64,
    pub median_amplitude_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyReport {
    pub points: Vec<NoisyPoint>,
    pub trials: Vec<NoisyTrial>,
}

/// Noisy recovery with ε = σ√(N + 2√(N log N)) at each SNR (or the fixed σ).
/// Trial t of a cell reuses the same clean signal and noise shape at every
/// SNR point.
pub fn noisy_localization_experiment(cfg: &ExperimentConfig) -> Result<NoisyReport> {
    if cfg.mode != Mode::Noisy {
        return Err(Error::config("noisy_localization_experiment needs mode = noisy"));
    }
    cfg.validate()?;
    let settings: Vec<NoiseSetting> = match cfg.sigma {
        Some(s) => vec![NoiseSetting::Sigma(s)],
        None => cfg.snr_db.iter().map(|&s| NoiseSetting::SnrDb(s)).collect(),
    };
    let mut tasks = Vec::new();
    for c in cfg.cells() {
        for (si, &s) in settings.iter().enumerate() {
            for t in 0..cfg.trials {
                tasks.push((c, si, s, t));
            }
        }
    }
    let trials: Vec<NoisyTrial> =
        cfg.pool()?.install(|| tasks.par_iter().map(|&(c, _, s, t)| run_trial(cfg, c, s, t)).collect());
    let mut points = Vec::new();
    for c in cfg.cells() {
        for (si, &s) in settings.iter().enumerate() {
            let idx: Vec<usize> =
                tasks.iter().enumerate().filter(|(_, task)| task.0 == c && task.1 == si).map(|(i, _)| i).collect();
            let rs: Vec<&NoisyTrial> = idx.iter().map(|&i| &trials[i]).collect();
            points.push(aggregate(cfg, c, s, &rs));
        }
    }
    Ok(NoisyReport { points, trials })
}

fn run_trial(cfg: &ExperimentConfig, cell: Cell, noise: NoiseSetting, trial: usize) -> NoisyTrial {
    let seed = cell.trial_seed(cfg.seed, trial);
    let start = Instant::now();
    let mut rec = NoisyTrial {
        cell,
        snr_db: match noise {
            NoiseSetting::SnrDb(s) => Some(s),
            _ => None,
        },
        trial,
        seed,
        sigma: f64::NAN,
        epsilon: f64::NAN,
        matched: 0,
        misses: cell.k,
        spurious: 0,
        all_matched: false,
        delay_errors: Vec::new(),
        amplitude_errors: Vec::new(),
        iterations: 0,
        converged: false,
        time_s: 0.0,
        failure: None,
    };
    let outcome = synthesize_trial(cfg, cell, seed, noise).and_then(|inst| {
        let sigma = match (noise, inst.truth.as_ref()) {
            (NoiseSetting::Sigma(s), _) => s,
            (NoiseSetting::SnrDb(snr), Some(t)) => sigma_for_snr((&inst.y - &t.noise).norm_squared(), inst.n(), snr),
            _ => 0.0,
        };
        let sol = solution_or_last(solve(&inst, &cfg.solver))?;
        let ev = evaluate(cfg, &inst, &sol)?;
        Ok((sigma, inst.noise_level, sol, ev))
    });
    rec.time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((sigma, eps, sol, ev)) => {
            rec.sigma = sigma;
            rec.epsilon = eps;
            rec.matched = ev.matching.pairs.len();
            rec.misses = ev.matching.misses.len();
            rec.spurious = ev.matching.false_alarms.len();
            rec.all_matched = ev.matching.all_found();
            rec.delay_errors = ev.matching.pairs.iter().map(|p| p.delay_error).collect();
            rec.amplitude_errors = ev.matching.pairs.iter().map(|p| p.amplitude_error).collect();
            rec.iterations = sol.iterations;
            rec.converged = sol.converged;
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

fn aggregate(cfg: &ExperimentConfig, cell: Cell, noise: NoiseSetting, rs: &[&NoisyTrial]) -> NoisyPoint {
    let mut rs = rs.to_vec();
    rs.sort_by_key(|r| r.trial);
    let radius = cfg.match_radius / cell.size as f64;
    let mut delays: Vec<f64> = rs
        .iter()
        .flat_map(|r| {
            let misses = if r.failure.is_some() { cell.k } else { r.misses };
            r.delay_errors.iter().copied().chain(std::iter::repeat_n(radius, misses))
        })
        .collect();
    delays.sort_by(f64::total_cmp);
    let mut amps: Vec<f64> = rs.iter().flat_map(|r| r.amplitude_errors.iter().copied()).collect();
    amps.sort_by(f64::total_cmp);
    NoisyPoint {
        cell,
        snr_db: match noise {
            NoiseSetting::SnrDb(s) => Some(s),
            _ => None,
        },
        sigma: match noise {
            NoiseSetting::Sigma(s) => Some(s),
            _ => None,
        },
        trials: rs.len(),
        all_matched: rs.iter().filter(|r| r.all_matched).count(),
        median_delay_error: median(&delays),
        mean_spurious: rs.iter().map(|r| r.spurious as f64).sum::<f64>() / rs.len().max(1) as f64,
        median_amplitude_error: median(&amps),
    }
}
