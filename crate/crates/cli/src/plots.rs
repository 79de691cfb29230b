//! Plot-ready CSV series written next to the main result tables.

use std::fs::File;
use std::path::Path;

use spikelift_core::experiment::output::{timestamp_line, write_table};
use spikelift_core::experiment::{
    certificate_workspace, CertificateCampaign, ExperimentConfig, NoisyReport, RunReport, SweepResult,
};
use spikelift_core::Error;

/// Product K·L traced as a reference hyperbola over the success surface.
const HYPERBOLA_KL: usize = 20;

fn table(path: &Path, kind: &str, columns: &[&str], rows: Vec<Vec<String>>) -> Result<(), Error> {
    write_table(File::create(path)?, &timestamp_line(kind), columns, &rows)
}

pub fn write_dual_curve(path: &Path, curve: &[(f64, f64)]) -> Result<(), Error> {
    let rows = curve.iter().map(|(t, v)| vec![t.to_string(), v.to_string()]).collect();
    table(path, "dual polynomial", &["tau", "norm"], rows)
}

pub fn write_run_plots(out: &Path, r: &RunReport) -> Result<(), Error> {
    if let Some(td) = &r.time_domain {
        let rows = (0..td.t.len())
            .map(|i| {
                vec![
                    td.t[i].to_string(),
                    td.psf[i].re.to_string(),
                    td.psf[i].im.to_string(),
                    td.measurements[i].re.to_string(),
                    td.measurements[i].im.to_string(),
                    td.estimated_psf[i].re.to_string(),
                    td.estimated_psf[i].im.to_string(),
                ]
            })
            .collect();
        table(
            &out.join("time_domain.csv"),
            "time domain",
            &["t", "psf_re", "psf_im", "measured_re", "measured_im", "estimated_psf_re", "estimated_psf_im"],
            rows,
        )?;
    }
    let mut rows = Vec::new();
    if let Some(truth) = &r.instance.truth {
        for (t, a) in truth.spikes.delays().iter().zip(truth.spikes.amplitudes()) {
            rows.push(vec!["truth".into(), t.to_string(), a.norm().to_string(), String::new()]);
        }
    }
    // Estimates are shown after global scale alignment so both sets share an axis.
    let loc = &r.localization;
    for ((t, a), q) in loc.delays.iter().zip(&loc.amplitudes).zip(&loc.peak_norms) {
        let scaled = (r.matching.beta * a).norm();
        rows.push(vec!["estimate".into(), t.to_string(), scaled.to_string(), q.to_string()]);
    }
    table(&out.join("spikes.csv"), "spikes", &["kind", "delay", "magnitude", "dual_norm"], rows)
}

pub fn write_sweep_plots(out: &Path, r: &SweepResult) -> Result<(), Error> {
    let rows = r
        .cells
        .iter()
        .map(|c| {
            vec![c.cell.size.to_string(), c.cell.k.to_string(), c.cell.l.to_string(), c.success_rate().to_string()]
        })
        .collect();
    table(&out.join("success_surface.csv"), "success surface", &["N", "K", "L", "success_rate"], rows)?;
    let k_max = r.cells.iter().map(|c| c.cell.k).max().unwrap_or(0);
    let rows = (1..=k_max).map(|k| vec![k.to_string(), (HYPERBOLA_KL as f64 / k as f64).to_string()]).collect();
    table(&out.join("hyperbola.csv"), &format!("KL = {HYPERBOLA_KL}"), &["K", "L"], rows)
}

pub fn write_noisy_plots(out: &Path, r: &NoisyReport) -> Result<(), Error> {
    let rows = r
        .points
        .iter()
        .map(|p| {
            vec![
                p.cell.size.to_string(),
                p.cell.k.to_string(),
                p.cell.l.to_string(),
                p.snr_db.map_or_else(String::new, |s| s.to_string()),
                p.sigma.map_or_else(String::new, |s| s.to_string()),
                (p.all_matched as f64 / p.trials.max(1) as f64).to_string(),
                p.median_delay_error.to_string(),
            ]
        })
        .collect();
    table(
        &out.join("snr_curve.csv"),
        "snr curve",
        &["N", "K", "L", "snr_db", "sigma", "match_rate", "median_delay_error"],
        rows,
    )
}

pub fn write_certificate_plots(out: &Path, r: &CertificateCampaign) -> Result<(), Error> {
    let rows = r
        .cells
        .iter()
        .map(|c| {
            vec![
                c.cell.size.to_string(),
                c.cell.k.to_string(),
                c.cell.l.to_string(),
                c.pass_rate().to_string(),
                c.median_far_max.to_string(),
            ]
        })
        .collect();
    table(&out.join("pass_rate.csv"), "certificate pass rate", &["M", "K", "L", "pass_rate", "median_far_max"], rows)
}

/// Norm of the certificate polynomial of trial 0 in the first cell.
pub fn write_certificate_curve(out: &Path, cfg: &ExperimentConfig) -> Result<(), Error> {
    let cell = cfg.cells()[0];
    let ws = match certificate_workspace(cfg, cell, 0) {
        Ok(ws) => ws,
        Err(e @ (Error::Config(_) | Error::Io(_))) => return Err(e),
        Err(e) => {
            eprintln!("certificate dump skipped: {e}");
            return Ok(());
        }
    };
    let grid = 16 * cell.size.max(64);
    let curve: Vec<(f64, f64)> =
        ws.poly().grid_norms(grid).into_iter().enumerate().map(|(i, v)| (i as f64 / grid as f64, v)).collect();
    write_dual_curve(&out.join("certificate_polynomial.csv"), &curve)
}
