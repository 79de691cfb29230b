//! CSV writers for experiment results and the determinism digest.
//!
//! Every table starts with one `#` comment line carrying a timestamp. Floats
//! use Rust's shortest round-trip formatting; missing values are empty cells.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use super::{CertificateCampaign, NoisyReport, SweepResult};
use crate::error::Result;

/// Columns holding wall-clock measurements; the digest ignores them.
pub const TIMING_COLUMNS: &[&str] = &["mean_time", "time_s"];

pub const SWEEP_COLUMNS: &[&str] =
    &["N", "K", "L", "trials", "successes", "success_rate", "mean_err", "median_err", "mean_time", "seed_base", "KL"];

pub const SWEEP_TRIAL_COLUMNS: &[&str] = &[
    "N",
    "K",
    "L",
    "trial",
    "seed",
    "error",
    "success",
    "iterations",
    "converged",
    "all_found",
    "max_delay_error",
    "false_alarms",
    "time_s",
    "failure",
];

pub const NOISY_COLUMNS: &[&str] = &[
    "N",
    "K",
    "L",
    "snr_db",
    "sigma",
    "trials",
    "all_matched",
    "median_delay_error",
    "mean_spurious",
    "median_amplitude_error",
];

pub const NOISY_TRIAL_COLUMNS: &[&str] = &[
    "N",
    "K",
    "L",
    "snr_db",
    "trial",
    "seed",
    "sigma",
    "epsilon",
    "matched",
    "misses",
    "spurious",
    "max_delay_error",
    "iterations",
    "converged",
    "time_s",
    "failure",
];

pub const CERTIFICATE_COLUMNS: &[&str] = &[
    "M",
    "K",
    "L",
    "trials",
    "passes",
    "pass_rate",
    "median_off_support_max",
    "median_far_max",
    "median_gamma_deviation",
    "max_gamma_deviation",
    "seed_base",
];

pub const CERTIFICATE_TRIAL_COLUMNS: &[&str] = &[
    "M",
    "K",
    "L",
    "trial",
    "seed",
    "pass",
    "off_support_max",
    "far_max",
    "interpolation_residual",
    "condition",
    "gamma_deviation",
    "failure",
];

fn f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, f)
}

pub fn timestamp_line(kind: &str) -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("# spikelift {kind} generated at unix time {secs}")
}

/// Write a `#` header line followed by a CSV table.
pub fn write_table<W: Write>(mut w: W, comment: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(w, "{comment}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn sweep_rows(r: &SweepResult) -> Vec<Vec<String>> {
    r.cells
        .iter()
        .map(|c| {
            vec![
                c.cell.size.to_string(),
                c.cell.k.to_string(),
                c.cell.l.to_string(),
                c.trials.to_string(),
                c.successes.to_string(),
                f(c.success_rate()),
                f(c.mean_err),
                f(c.median_err),
                f(c.mean_time),
                c.seed_base.to_string(),
                (c.cell.k * c.cell.l).to_string(),
            ]
        })
        .collect()
}

pub fn sweep_trial_rows(r: &SweepResult) -> Vec<Vec<String>> {
    r.records
        .iter()
        .map(|t| {
            vec![
                t.cell.size.to_string(),
                t.cell.k.to_string(),
                t.cell.l.to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                opt(t.error),
                t.success.to_string(),
                t.iterations.to_string(),
                t.converged.to_string(),
                t.all_found.to_string(),
                f(t.max_delay_error),
                t.false_alarms.to_string(),
                f(t.time_s),
                t.failure.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn noisy_rows(r: &NoisyReport) -> Vec<Vec<String>> {
    r.points
        .iter()
        .map(|p| {
            vec![
                p.cell.size.to_string(),
                p.cell.k.to_string(),
                p.cell.l.to_string(),
                opt(p.snr_db),
                opt(p.sigma),
                p.trials.to_string(),
                p.all_matched.to_string(),
                f(p.median_delay_error),
                f(p.mean_spurious),
                f(p.median_amplitude_error),
            ]
        })
        .collect()
}

pub fn noisy_trial_rows(r: &NoisyReport) -> Vec<Vec<String>> {
    r.trials
        .iter()
        .map(|t| {
            vec![
                t.cell.size.to_string(),
                t.cell.k.to_string(),
                t.cell.l.to_string(),
                opt(t.snr_db),
                t.trial.to_string(),
                t.seed.to_string(),
                f(t.sigma),
                f(t.epsilon),
                t.matched.to_string(),
                t.misses.to_string(),
                t.spurious.to_string(),
                f(t.delay_errors.iter().copied().fold(f64::NAN, f64::max)),
                t.iterations.to_string(),
                t.converged.to_string(),
                f(t.time_s),
                t.failure.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn certificate_rows(r: &CertificateCampaign) -> Vec<Vec<String>> {
    r.cells
        .iter()
        .map(|c| {
            vec![
                c.cell.size.to_string(),
                c.cell.k.to_string(),
                c.cell.l.to_string(),
                c.trials.to_string(),
                c.passes.to_string(),
                f(c.pass_rate()),
                f(c.median_off_support_max),
                f(c.median_far_max),
                f(c.median_gamma_deviation),
                f(c.max_gamma_deviation),
                c.seed_base.to_string(),
            ]
        })
        .collect()
}

pub fn certificate_trial_rows(r: &CertificateCampaign) -> Vec<Vec<String>> {
    r.trials
        .iter()
        .map(|t| {
            vec![
                t.cell.size.to_string(),
                t.cell.k.to_string(),
                t.cell.l.to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.report.pass.to_string(),
                f(t.report.off_support_max),
                f(t.report.far_max),
                f(t.report.interpolation_residual),
                f(t.report.condition),
                f(t.gamma_deviation),
                t.report.failure.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

/// SHA-256 of a CSV table with `#` lines and timing columns removed.
pub fn determinism_digest(text: &str) -> Result<String> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let mut hasher = Sha256::new();
    let mut keep: Option<Vec<bool>> = None;
    for rec in rd.records() {
        let rec = rec?;
        let mask = keep.get_or_insert_with(|| rec.iter().map(|c| !TIMING_COLUMNS.contains(&c)).collect());
        for (cell, &k) in rec.iter().zip(mask.iter()) {
            if k {
                hasher.update(cell.as_bytes());
                hasher.update([0x1f]);
            }
        }
        hasher.update([0x1e]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
