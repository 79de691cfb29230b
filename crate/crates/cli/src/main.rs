//! `spikelift`: generate, solve and score blind spike deconvolution
//! experiments.
//!
//! Exit status is 0 whenever the command ran to completion, including runs
//! whose trials failed numerically; 2 for configuration errors and 3 for I/O
//! errors.

mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spikelift_core::experiment::output::{self, write_table};
use spikelift_core::experiment::{
    certificate_campaign, noisy_localization_experiment, phase_transition_sweep, run_instance, synthesize_trial,
    ExperimentConfig, Mode, NoiseSetting, Preset, RunOptions,
};
use spikelift_core::Error;

/// Default output directory when neither `--out` nor the config sets one.
const OUT_ENV: &str = "SPIKELIFT_OUT";
const DEFAULT_OUT: &str = "spikelift-out";

#[derive(Parser)]
#[command(name = "spikelift", version, about = "Blind spike deconvolution by lifting and atomic-norm minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic instance (ground truth and measurements) of a run.
    Synth(Common),
    /// Solve one instance, localize the spikes and write a JSON report.
    Run(Common),
    /// Monte Carlo success rates over an (N, K, L) grid.
    Sweep(Common),
    /// Noisy recovery at one or more SNR points.
    Noisy(Common),
    /// Build and validate dual certificates over an (M, K, L) grid.
    Certify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig1,
    Fig2,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<PresetArg>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory [default: $SPIKELIFT_OUT, else ./spikelift-out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write the dual (or certificate) polynomial norm curve.
    #[arg(long)]
    dump_dual: bool,
    /// Also write plot-ready (x, y) series.
    #[arg(long)]
    plot_data: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spikelift: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
        _ => 2,
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    let (mode, common, synth) = match cmd {
        Command::Synth(c) => (Mode::Run, c, true),
        Command::Run(c) => (Mode::Run, c, false),
        Command::Sweep(c) => (Mode::Sweep, c, false),
        Command::Noisy(c) => (Mode::Noisy, c, false),
        Command::Certify(c) => (Mode::Certify, c, false),
    };
    let cfg = resolve_config(mode, &common)?;
    let out = output_dir(&common, &cfg);
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    match mode {
        Mode::Run if synth => synth_cmd(&cfg, &out),
        Mode::Run => run_cmd(&cfg, &common, &out),
        Mode::Sweep => sweep_cmd(&cfg, &common, &out),
        Mode::Noisy => noisy_cmd(&cfg, &common, &out),
        Mode::Certify => certify_cmd(&cfg, &common, &out),
    }
}

fn resolve_config(mode: Mode, c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&c.config, c.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(PresetArg::Fig1)) => ExperimentConfig::preset(Preset::Fig1),
        (None, Some(PresetArg::Fig2)) => ExperimentConfig::preset(Preset::Fig2),
        (None, None) => ExperimentConfig::default(),
    };
    cfg.mode = mode;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn noise_setting(cfg: &ExperimentConfig) -> NoiseSetting {
    match (cfg.sigma, cfg.snr_db.first()) {
        (Some(s), _) => NoiseSetting::Sigma(s),
        (None, Some(&snr)) => NoiseSetting::SnrDb(snr),
        (None, None) => NoiseSetting::None,
    }
}

fn synth_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    let cell = cfg.cells()[0];
    let seed = cell.trial_seed(cfg.seed, 0);
    let inst = synthesize_trial(cfg, cell, seed, noise_setting(cfg))?;
    let path = out.join("instance.json");
    fs::write(&path, serde_json::to_string_pretty(&inst)?)?;
    println!("instance N={} K={} L={} seed={seed} -> {}", cell.size, cell.k, cell.l, path.display());
    Ok(())
}

fn run_cmd(cfg: &ExperimentConfig, c: &Common, out: &Path) -> Result<(), Error> {
    let n = cfg.cells()[0].size;
    let opts = RunOptions {
        dual_points: c.dump_dual.then_some(16 * n.max(64)),
        plot_points: c.plot_data.then_some(8 * n.max(64)),
    };
    let report = match run_instance(cfg, &opts) {
        Ok(r) => r,
        Err(Error::NotConverged { iterations, primal, dual, gap, stalled, history, .. }) => {
            // A numerical failure is a completed run: record the diagnostics.
            let diag = serde_json::json!({
                "converged": false,
                "iterations": iterations,
                "primal_residual": primal,
                "dual_residual": dual,
                "gap": gap,
                "stalled": stalled,
                "history": history,
            });
            fs::write(out.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)?;
            eprintln!(
                "solver did not converge in {iterations} iterations (primal {primal:.3e}, dual {dual:.3e}, gap {gap:.3e}); diagnostics written"
            );
            return Ok(());
        }
        Err(e @ (Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_))) => return Err(e),
        Err(e) => {
            eprintln!("run failed: {e}");
            return Ok(());
        }
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    if let Some(curve) = &report.dual_curve {
        plots::write_dual_curve(&out.join("dual_polynomial.csv"), curve)?;
    }
    if c.plot_data {
        plots::write_run_plots(out, &report)?;
    }
    let m = &report.matching;
    println!(
        "normalized error {}; {}/{} spikes matched, max delay error {:.3e}, {} extra peaks; {} iterations",
        report.normalized_error.map_or_else(|| "undefined".to_string(), |e| format!("{e:.3e}")),
        m.pairs.len(),
        report.cell.k,
        m.max_delay_error,
        m.false_alarms.len(),
        report.solver.iterations
    );
    Ok(())
}

fn sweep_cmd(cfg: &ExperimentConfig, c: &Common, out: &Path) -> Result<(), Error> {
    let r = phase_transition_sweep(cfg)?;
    let path = out.join("sweep.csv");
    let stamp = output::timestamp_line("sweep");
    write_table(fs::File::create(&path)?, &stamp, output::SWEEP_COLUMNS, &output::sweep_rows(&r))?;
    write_table(
        fs::File::create(out.join("sweep_trials.csv"))?,
        &stamp,
        output::SWEEP_TRIAL_COLUMNS,
        &output::sweep_trial_rows(&r),
    )?;
    if c.plot_data {
        plots::write_sweep_plots(out, &r)?;
    }
    if c.dump_dual {
        eprintln!("--dump-dual has no effect for sweeps; use `run` on a single cell");
    }
    for s in &r.cells {
        println!("N={:<4} K={:<3} L={:<3} success {}/{}", s.cell.size, s.cell.k, s.cell.l, s.successes, s.trials);
    }
    println!("digest {}", output::determinism_digest(&fs::read_to_string(&path)?)?);
    Ok(())
}

fn noisy_cmd(cfg: &ExperimentConfig, c: &Common, out: &Path) -> Result<(), Error> {
    let r = noisy_localization_experiment(cfg)?;
    let stamp = output::timestamp_line("noisy");
    let path = out.join("noisy.csv");
    write_table(fs::File::create(&path)?, &stamp, output::NOISY_COLUMNS, &output::noisy_rows(&r))?;
    write_table(
        fs::File::create(out.join("noisy_trials.csv"))?,
        &stamp,
        output::NOISY_TRIAL_COLUMNS,
        &output::noisy_trial_rows(&r),
    )?;
    if c.plot_data {
        plots::write_noisy_plots(out, &r)?;
    }
    if c.dump_dual {
        let single = ExperimentConfig {
            mode: Mode::Run,
            n: vec![cfg.n[0]],
            k: vec![cfg.k[0]],
            l: vec![cfg.l[0]],
            ..cfg.clone()
        };
        let points = 16 * single.n[0].max(64);
        match run_instance(&single, &RunOptions { dual_points: Some(points), plot_points: None }) {
            Ok(rep) => {
                plots::write_dual_curve(&out.join("dual_polynomial.csv"), rep.dual_curve.as_deref().unwrap_or(&[]))?
            }
            Err(e) => eprintln!("dual dump skipped: {e}"),
        }
    }
    for p in &r.points {
        let level =
            p.snr_db.map(|s| format!("SNR {s} dB")).or(p.sigma.map(|s| format!("sigma {s}"))).unwrap_or_default();
        println!(
            "N={} K={} L={} {level}: all spikes matched in {}/{} trials, median delay error {:.3e}, mean spurious peaks {:.2}",
            p.cell.size, p.cell.k, p.cell.l, p.all_matched, p.trials, p.median_delay_error, p.mean_spurious
        );
    }
    println!("digest {}", output::determinism_digest(&fs::read_to_string(&path)?)?);
    Ok(())
}

fn certify_cmd(cfg: &ExperimentConfig, c: &Common, out: &Path) -> Result<(), Error> {
    let r = certificate_campaign(cfg)?;
    let stamp = output::timestamp_line("certify");
    let path = out.join("certificate.csv");
    write_table(fs::File::create(&path)?, &stamp, output::CERTIFICATE_COLUMNS, &output::certificate_rows(&r))?;
    write_table(
        fs::File::create(out.join("certificate_trials.csv"))?,
        &stamp,
        output::CERTIFICATE_TRIAL_COLUMNS,
        &output::certificate_trial_rows(&r),
    )?;
    if c.plot_data {
        plots::write_certificate_plots(out, &r)?;
    }
    if c.dump_dual {
        plots::write_certificate_curve(out, cfg)?;
    }
    for s in &r.cells {
        println!(
            "M={:<4} K={:<3} L={:<3} pass {}/{}, median far-region max {:.5}",
            s.cell.size, s.cell.k, s.cell.l, s.passes, s.trials, s.median_far_max
        );
    }
    println!("digest {}", output::determinism_digest(&fs::read_to_string(&path)?)?);
    Ok(())
}
