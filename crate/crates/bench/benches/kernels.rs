use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spikelift_core::certificate::validate_certificate;
use spikelift_core::experiment::{certificate_workspace, synthesize_trial, Cell, ExperimentConfig, Mode, NoiseSetting};
use spikelift_core::sdp::DualNormOptions;
use spikelift_core::{dual_atomic_norm, lift_adjoint, lift_forward, solve, ProblemInstance};

fn instance(n: usize, k: usize, l: usize) -> ProblemInstance {
    let cfg = ExperimentConfig::default();
    let cell = Cell { size: n, k, l };
    synthesize_trial(&cfg, cell, cell.trial_seed(1, 0), NoiseSetting::None).unwrap()
}

fn lifting(c: &mut Criterion) {
    let mut g = c.benchmark_group("lifting");
    for n in [64, 256] {
        let inst = instance(n, 4, 3);
        let z = lift_adjoint(&inst.y, &inst.subspace).unwrap();
        g.bench_with_input(BenchmarkId::new("forward", n), &z, |b, z| {
            b.iter(|| lift_forward(black_box(z), &inst.subspace).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("adjoint", n), &inst.y, |b, y| {
            b.iter(|| lift_adjoint(black_box(y), &inst.subspace).unwrap())
        });
    }
    g.finish();
}

fn dual_norm(c: &mut Criterion) {
    let mut g = c.benchmark_group("dual_atomic_norm");
    let opts = DualNormOptions::default();
    for n in [64, 256] {
        let inst = instance(n, 4, 3);
        let q = lift_adjoint(&inst.y, &inst.subspace).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &q, |b, q| b.iter(|| dual_atomic_norm(black_box(q), &opts)));
    }
    g.finish();
}

fn admm(c: &mut Criterion) {
    let mut g = c.benchmark_group("admm_noiseless");
    g.sample_size(10);
    let opts = ExperimentConfig::default().solver;
    for (n, k, l) in [(32, 2, 2), (64, 6, 3)] {
        let inst = instance(n, k, l);
        g.bench_with_input(BenchmarkId::from_parameter(format!("N{n}_K{k}_L{l}")), &inst, |b, inst| {
            b.iter(|| solve(black_box(inst), &opts).unwrap())
        });
    }
    g.finish();
}

fn certificate(c: &mut Criterion) {
    let mut g = c.benchmark_group("certificate");
    g.sample_size(10);
    let cfg = ExperimentConfig { mode: Mode::Certify, ..ExperimentConfig::default() };
    for m in [16, 64] {
        let cell = Cell { size: m, k: 4, l: 3 };
        g.bench_with_input(BenchmarkId::new("build", m), &cell, |b, &cell| {
            b.iter(|| certificate_workspace(&cfg, cell, 0).unwrap())
        });
        let ws = certificate_workspace(&cfg, cell, 0).unwrap();
        g.bench_with_input(BenchmarkId::new("validate", m), &ws, |b, ws| {
            b.iter(|| validate_certificate(black_box(ws), &cfg.validation))
        });
    }
    g.finish();
}

criterion_group!(benches, lifting, dual_norm, admm, certificate);
criterion_main!(benches);
