//! ADMM on the splitting {structured block (Toep(u), Z, W)} = {PSD matrix S}.
//!
//! The structured step is closed form: diagonal averaging for the Toeplitz
//! block, a shifted copy for W, and a row-separable projection of Z onto the
//! data constraint (each measurement touches exactly one row of Z). The S step
//! is a PSD projection. The problem is normalized so the data has unit norm;
//! the dual multiplier is invariant under that scaling.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::psd::{min_eigenvalue, project_psd};
use super::{IterationRecord, SolverOptions};
use crate::error::{Error, Result};
use crate::signal::SubspaceModel;
use crate::C64;

pub(crate) enum Constraint<'a> {
    /// Z is given; computes its atomic norm.
    Fixed(&'a DMatrix<C64>),
    /// X(Z) = y.
    Equality { y: &'a DVector<C64>, subspace: &'a SubspaceModel },
    /// ‖X(Z) − y‖₂ ≤ eps.
    Ball { y: &'a DVector<C64>, subspace: &'a SubspaceModel, eps: f64 },
}

pub(crate) struct AdmmOutput {
    pub u: DVector<C64>,
    pub w: DMatrix<C64>,
    pub z: DMatrix<C64>,
    /// Off-diagonal block of the PSD-constraint multiplier, Λ₁₂.
    pub multiplier: DMatrix<C64>,
    pub objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub min_eig: f64,
    pub trace: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub history: Vec<IterationRecord>,
}

struct Data<'a> {
    kind: &'a Constraint<'a>,
    /// Normalized measurements (or normalized fixed Z).
    y: DVector<C64>,
    z_fixed: Option<DMatrix<C64>>,
    b: Option<&'a DMatrix<C64>>,
    row_norms: Vec<f64>,
    eps: f64,
}

pub(crate) fn run(constraint: &Constraint<'_>, n: usize, l: usize, opts: &SolverOptions) -> Result<AdmmOutput> {
    let (scale, data) = normalize(constraint)?;
    let d = n + l;
    let mut rho = opts.rho_init;
    let mut s = DMatrix::<C64>::zeros(d, d);
    let mut dual = DMatrix::<C64>::zeros(d, d); // scaled: Λ/ρ
    let mut history = Vec::new();
    let mut out_u = DVector::zeros(n);
    let mut out_w = DMatrix::zeros(l, l);
    let mut out_z = DMatrix::zeros(n, l);
    let (mut rp, mut rd, mut gap, mut objective) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0);
    let alpha = opts.relaxation;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let g = &s - &dual;
        let u = toeplitz_projection(&g, n, rho);
        let w = {
            let g22 = g.view((n, n), (l, l));
            let mut w = (g22 + g22.adjoint()) * C64::new(0.5, 0.0);
            for i in 0..l {
                w[(i, i)] -= C64::new(0.5 / rho, 0.0);
            }
            w
        };
        let z0 = {
            let g12 = g.view((0, n), (n, l));
            let g21 = g.view((n, 0), (l, n));
            (g12 + g21.adjoint()) * C64::new(0.5, 0.0)
        };
        let z = project_data(&data, z0);
        let m = assemble(&u, &z, &w);

        let m_hat = if alpha == 1.0 { m.clone() } else { &m * C64::new(alpha, 0.0) + &s * C64::new(1.0 - alpha, 0.0) };
        let v = &m_hat + &dual;
        let s_new = project_psd(&v)?;
        dual += &m_hat - &s_new;

        let m_norm = m.norm();
        let primal_abs = (&m - &s_new).norm();
        let dual_abs = rho * (&s_new - &s).norm();
        rp = primal_abs / m_norm.max(s_new.norm()).max(1e-300);
        rd = dual_abs / (rho * dual.norm()).max(1e-300);
        s = s_new;

        objective = 0.5 * n as f64 * u[0].re + 0.5 * w.trace().re;
        let mult = dual.view((0, n), (n, l)) * C64::new(rho, 0.0);
        let dual_obj = dual_objective(&data, &mult, &z);
        gap = (objective - dual_obj).abs() / (1.0 + objective.abs());

        history.push(IterationRecord { iter: it, primal_res: rp, dual_res: rd, gap, rho });
        out_u = u;
        out_w = w;
        out_z = z;

        if rp < opts.stop_residual && rd < opts.stop_residual && gap < opts.stop_gap {
            converged = true;
            break;
        }
        if it % opts.rho_update_every == 0 {
            if rp > opts.rho_balance * rd {
                rho *= opts.rho_factor;
                dual /= C64::new(opts.rho_factor, 0.0);
            } else if rd > opts.rho_balance * rp {
                rho /= opts.rho_factor;
                dual *= C64::new(opts.rho_factor, 0.0);
            }
        }
    }

    if let Some(path) = &opts.trace_path {
        write_trace(path, &history)?;
    }

    let multiplier = dual.view((0, n), (n, l)) * C64::new(rho, 0.0);
    let block = assemble(&out_u, &out_z, &out_w);
    let min_eig = min_eigenvalue(&block)? * scale;
    let trace = block.trace().re * scale;
    let stalled = !converged && plateaued(&history);
    Ok(AdmmOutput {
        u: out_u * C64::new(scale, 0.0),
        w: out_w * C64::new(scale, 0.0),
        z: out_z * C64::new(scale, 0.0),
        multiplier,
        objective: objective * scale,
        primal_res: rp,
        dual_res: rd,
        gap,
        min_eig,
        trace,
        iterations,
        converged,
        stalled,
        history,
    })
}

fn normalize<'a>(c: &'a Constraint<'a>) -> Result<(f64, Data<'a>)> {
    let unit = |v: f64| if v > 0.0 { v } else { 1.0 };
    Ok(match c {
        Constraint::Fixed(z) => {
            let scale = unit(z.norm());
            (
                scale,
                Data {
                    kind: c,
                    y: DVector::zeros(0),
                    z_fixed: Some(*z / C64::new(scale, 0.0)),
                    b: None,
                    row_norms: Vec::new(),
                    eps: 0.0,
                },
            )
        }
        Constraint::Equality { y, subspace } | Constraint::Ball { y, subspace, .. } => {
            let row_norms = subspace.row_norms_sqr();
            let eps = match c {
                Constraint::Ball { eps, .. } => *eps,
                _ => 0.0,
            };
            let unreachable: f64 =
                row_norms.iter().zip(y.iter()).filter(|(r, _)| **r == 0.0).map(|(_, v)| v.norm_sqr()).sum();
            if unreachable.sqrt() > eps {
                return Err(Error::Infeasible("a zero subspace row faces nonzero data beyond the noise level".into()));
            }
            let scale = unit(y.norm());
            (
                scale,
                Data {
                    kind: c,
                    y: *y / C64::new(scale, 0.0),
                    z_fixed: None,
                    b: Some(subspace.matrix()),
                    row_norms,
                    eps: eps / scale,
                },
            )
        }
    })
}

/// Least-squares Hermitian Toeplitz fit of the top-left block, with the
/// ½·N·u₀ objective term folded into u₀. Returns the first column u.
fn toeplitz_projection(g: &DMatrix<C64>, n: usize, rho: f64) -> DVector<C64> {
    let mut u = DVector::zeros(n);
    let diag: f64 = (0..n).map(|i| g[(i, i)].re).sum();
    u[0] = C64::new(diag / n as f64 - 0.5 / rho, 0.0);
    for k in 1..n {
        let mut acc = C64::new(0.0, 0.0);
        for i in k..n {
            acc += g[(i, i - k)] + g[(i - k, i)].conj();
        }
        u[k] = acc / (2.0 * (n - k) as f64);
    }
    u
}

pub(crate) fn assemble(u: &DVector<C64>, z: &DMatrix<C64>, w: &DMatrix<C64>) -> DMatrix<C64> {
    let n = u.len();
    let l = w.nrows();
    let mut m = DMatrix::zeros(n + l, n + l);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = if i >= j { u[i - j] } else { u[j - i].conj() };
        }
    }
    m.view_mut((0, n), (n, l)).copy_from(z);
    m.view_mut((n, 0), (l, n)).copy_from(&z.adjoint());
    m.view_mut((n, n), (l, l)).copy_from(w);
    m
}

fn project_data(data: &Data<'_>, z0: DMatrix<C64>) -> DMatrix<C64> {
    match data.kind {
        Constraint::Fixed(_) => data.z_fixed.clone().expect("fixed Z"),
        Constraint::Equality { .. } => {
            let b = data.b.expect("subspace");
            let mut z = z0;
            for r in 0..z.nrows() {
                let bn2 = data.row_norms[r];
                if bn2 == 0.0 {
                    continue;
                }
                let fit: C64 = z.row(r).iter().zip(b.row(r).iter()).map(|(a, c)| a * c).sum();
                let t = (data.y[r] - fit) / bn2;
                for i in 0..z.ncols() {
                    z[(r, i)] += t * b[(r, i)].conj();
                }
            }
            z
        }
        Constraint::Ball { .. } => {
            let b = data.b.expect("subspace");
            let mut z = z0;
            let resid: Vec<C64> = (0..z.nrows())
                .map(|r| {
                    let fit: C64 = z.row(r).iter().zip(b.row(r).iter()).map(|(a, c)| a * c).sum();
                    data.y[r] - fit
                })
                .collect();
            let lambda = ball_multiplier(&resid, &data.row_norms, data.eps);
            if lambda == 0.0 {
                return z;
            }
            for r in 0..z.nrows() {
                let bn2 = data.row_norms[r];
                if bn2 == 0.0 {
                    continue;
                }
                let t = resid[r] * (lambda / (1.0 + lambda * bn2));
                for i in 0..z.ncols() {
                    z[(r, i)] += t * b[(r, i)].conj();
                }
            }
            z
        }
    }
}

/// Multiplier λ ≥ 0 of the weighted ball projection: the new residual is
/// d_n / (1 + λ‖b_n‖²) and λ solves Σ |d_n|² / (1 + λ‖b_n‖²)² = ε².
/// Zero when the residual is already inside the ball.
fn ball_multiplier(d: &[C64], row_norms: &[f64], eps: f64) -> f64 {
    let phi = |lam: f64| -> f64 {
        d.iter().zip(row_norms).map(|(v, &b)| v.norm_sqr() / (1.0 + lam * b).powi(2)).sum::<f64>().sqrt()
    };
    if phi(0.0) <= eps {
        return 0.0;
    }
    // Rows with zero norm keep their residual whatever λ is.
    let floor = d.iter().zip(row_norms).filter(|(_, &b)| b == 0.0).map(|(v, _)| v.norm_sqr()).sum::<f64>().sqrt();
    if floor >= eps {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi(hi) > eps {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

fn dual_objective(data: &Data<'_>, mult: &DMatrix<C64>, z: &DMatrix<C64>) -> f64 {
    match data.kind {
        Constraint::Fixed(_) => {
            // Certificate matrix Y = 2Λ₁₂; dual value Re⟨Z, Y⟩.
            2.0 * crate::lifting::inner(z, mult).re
        }
        Constraint::Equality { .. } | Constraint::Ball { .. } => {
            let p = multiplier_to_dual(mult, data.b.expect("subspace"), &data.row_norms);
            let ip: C64 = p.iter().zip(data.y.iter()).map(|(a, b)| b.conj() * a).sum();
            ip.re - data.eps * p.norm()
        }
    }
}

/// Least-squares p with X*(p) ≈ 2Λ₁₂, row by row.
pub(crate) fn multiplier_to_dual(mult: &DMatrix<C64>, b: &DMatrix<C64>, row_norms: &[f64]) -> DVector<C64> {
    DVector::from_iterator(
        mult.nrows(),
        (0..mult.nrows()).map(|r| {
            if row_norms[r] == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let s: C64 = mult.row(r).iter().zip(b.row(r).iter()).map(|(m, c)| m * c).sum();
            s * (2.0 / row_norms[r])
        }),
    )
}

/// True when the primal residual fell by less than half over the last fifth
/// of the run.
fn plateaued(h: &[IterationRecord]) -> bool {
    if h.len() < 50 {
        return false;
    }
    let tail = &h[h.len() - h.len() / 5..];
    let first = tail.first().map(|r| r.primal_res).unwrap_or(0.0);
    let last = tail.last().map(|r| r.primal_res).unwrap_or(0.0);
    last > 0.5 * first
}

fn write_trace(path: &std::path::Path, history: &[IterationRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iter,primal_res,dual_res,gap")?;
    for r in history {
        writeln!(f, "{},{:e},{:e},{:e}", r.iter, r.primal_res, r.dual_res, r.gap)?;
    }
    Ok(())
}
