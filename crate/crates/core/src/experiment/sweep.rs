use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::evaluate;
use super::{synthesize_trial, Cell, ExperimentConfig, Mode, NoiseSetting};
use crate::error::{Error, Result};
use crate::sdp::{solution_or_last, solve};

/// Outcome of one trial. A trial that fails outright keeps its seed and the
/// failure message; it counts as unsuccessful.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: Cell,
    pub trial: usize,
    pub seed: u64,
    pub error: Option<f64>,
    pub success: bool,
    pub iterations: usize,
    pub converged: bool,
    pub all_found: bool,
    pub max_delay_error: f64,
    pub false_alarms: usize,
    pub time_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub trials: usize,
    pub successes: usize,
    /// Over trials with a defined error; NaN when there are none.
    pub mean_err: f64,
    pub median_err: f64,
    pub mean_time: f64,
    pub seed_base: u64,
}

impl CellSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn cell(&self, size: usize, k: usize, l: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == Cell { size, k, l })
    }
}

/// Monte Carlo success rates over the (N, K, L) grid.
pub fn phase_transition_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    if cfg.mode != Mode::Sweep {
        return Err(Error::config("phase_transition_sweep needs mode = sweep"));
    }
    cfg.validate()?;
    let cells = cfg.cells();
    let tasks: Vec<(Cell, usize)> = cells.iter().flat_map(|&c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let records: Vec<TrialRecord> =
        cfg.pool()?.install(|| tasks.par_iter().map(|&(c, t)| run_trial(cfg, c, t)).collect());
    let summaries = cells
        .iter()
        .map(|&c| {
            let rs: Vec<TrialRecord> = records.iter().filter(|r| r.cell == c).cloned().collect();
            aggregate_cell(c, c.seed_base(cfg.seed), &rs)
        })
        .collect();
    Ok(SweepResult { cells: summaries, records })
}

fn run_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> TrialRecord {
    let seed = cell.trial_seed(cfg.seed, trial);
    let start = Instant::now();
    let mut rec = TrialRecord {
        cell,
        trial,
        seed,
        error: None,
        success: false,
        iterations: 0,
        converged: false,
        all_found: false,
        max_delay_error: f64::NAN,
        false_alarms: 0,
        time_s: 0.0,
        failure: None,
    };
    let noise = cfg.sigma.map_or(NoiseSetting::None, NoiseSetting::Sigma);
    let outcome = synthesize_trial(cfg, cell, seed, noise).and_then(|inst| {
        let sol = solution_or_last(solve(&inst, &cfg.solver))?;
        let ev = evaluate(cfg, &inst, &sol)?;
        Ok((sol, ev))
    });
    rec.time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((sol, ev)) => {
            rec.error = ev.normalized_error;
            rec.success = ev.success;
            rec.iterations = sol.iterations;
            rec.converged = sol.converged;
            rec.all_found = ev.matching.all_found();
            rec.max_delay_error = ev.matching.max_delay_error;
            rec.false_alarms = ev.matching.false_alarms.len();
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

/// Per-cell statistics. Records are sorted by trial index first, so the
/// result does not depend on the order they arrive in.
pub fn aggregate_cell(cell: Cell, seed_base: u64, records: &[TrialRecord]) -> CellSummary {
    let mut rs: Vec<&TrialRecord> = records.iter().collect();
    rs.sort_by_key(|r| r.trial);
    let mut errs: Vec<f64> = rs.iter().filter_map(|r| r.error).collect();
    let mean_err = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    errs.sort_by(f64::total_cmp);
    let median_err = median(&errs);
    let mean_time = if rs.is_empty() { f64::NAN } else { rs.iter().map(|r| r.time_s).sum::<f64>() / rs.len() as f64 };
    CellSummary {
        cell,
        trials: rs.len(),
        successes: rs.iter().filter(|r| r.success).count(),
        mean_err,
        median_err,
        mean_time,
        seed_base,
    }
}

/// Median of sorted data; NaN when empty.
pub(crate) fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}
