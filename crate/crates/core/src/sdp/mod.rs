//! Atomic norm and the lifted recovery programs, solved as SDPs by ADMM.
//!
//! The atomic norm of Z is
//!
//!   min ½·tr Toep(u) + ½·tr W   s.t.  [[Toep(u), Z], [Zᴴ, W]] ⪰ 0,
//!
//! and recovery minimizes it subject to X(Z) = y or ‖X(Z) − y‖₂ ≤ ε.
//! The dual vector p is read off the PSD multiplier: its off-diagonal block
//! equals ½·X*(p) at optimality.

mod admm;
mod dual_norm;
mod dual_sdp;
mod psd;

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dual_norm::{dual_atomic_norm, DualNormOptions};
pub use dual_sdp::{solve_dual_sdp, DualSdpSolution};

use crate::cjson;
use crate::error::{Error, Result};
use crate::lifting::{lift_adjoint, lift_forward};
use crate::signal::{ProblemInstance, SubspaceModel};
use crate::C64;
use admm::Constraint;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub rho_init: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    pub max_iter: usize,
    /// Relative primal and dual residual threshold.
    pub stop_residual: f64,
    /// Relative duality gap threshold.
    pub stop_gap: f64,
    /// Iterations between penalty updates.
    pub rho_update_every: usize,
    /// Residual ratio that triggers a penalty update.
    pub rho_balance: f64,
    pub rho_factor: f64,
    pub tol_psd: f64,
    pub tol_feas: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub dual_norm: DualNormOptions,
    /// Write the iteration trace CSV here.
    pub trace_path: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rho_init: 1.0,
            relaxation: 1.6,
            max_iter: 50_000,
            stop_residual: 1e-7,
            stop_gap: 1e-6,
            rho_update_every: 10,
            rho_balance: 10.0,
            rho_factor: 2.0,
            tol_psd: 1e-7,
            tol_feas: 1e-8,
            tol_dual: 1e-4,
            tol_gap: 1e-4,
            dual_norm: DualNormOptions::default(),
            trace_path: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.rho_init, "rho_init")?;
        pos(self.stop_residual, "stop_residual")?;
        pos(self.stop_gap, "stop_gap")?;
        pos(self.rho_balance, "rho_balance")?;
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::config("relaxation must lie in (0, 2)"));
        }
        if self.rho_factor <= 1.0 {
            return Err(Error::config("rho_factor must exceed 1"));
        }
        if self.max_iter == 0 || self.rho_update_every == 0 {
            return Err(Error::config("iteration counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub rho: f64,
}

/// Structured primal variables of the atomic-norm SDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpBlock {
    #[serde(with = "cjson::dvector")]
    pub u: DVector<C64>,
    #[serde(with = "cjson::dmatrix")]
    pub w: DMatrix<C64>,
    #[serde(with = "cjson::dmatrix")]
    pub z: DMatrix<C64>,
}

impl SdpBlock {
    /// Toep(u) with entry (i, j) = u_{i−j}, u_{−k} = conj(u_k).
    pub fn toeplitz(&self) -> DMatrix<C64> {
        let n = self.u.len();
        DMatrix::from_fn(n, n, |i, j| if i >= j { self.u[i - j] } else { self.u[j - i].conj() })
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        admm::assemble(&self.u, &self.z, &self.w)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        psd::min_eigenvalue(&self.matrix())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative distance between the structured block and the PSD copy.
    pub primal: f64,
    /// Relative change of the PSD copy, scaled by the penalty.
    pub dual: f64,
    /// Noiseless: ‖X(Ẑ) − y‖/‖y‖. Noisy: ‖X(Ẑ) − y‖/ε.
    pub constraint: f64,
    /// Relative duality gap reported by the iteration.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedSolution {
    #[serde(with = "cjson::dmatrix")]
    pub z_hat: DMatrix<C64>,
    pub objective: f64,
    #[serde(with = "cjson::dvector")]
    pub p: DVector<C64>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    pub block: SdpBlock,
    pub min_block_eig: f64,
    /// ‖X*(p)‖*_A; at most 1 + tol_dual for a usable certificate.
    pub dual_norm: f64,
    /// Re⟨p, y⟩ − ε‖p‖.
    pub dual_objective: f64,
    /// |dual_objective − objective| / (1 + objective).
    pub duality_gap: f64,
    pub warnings: Vec<String>,
}

impl LiftedSolution {
    fn zero(n: usize, l: usize) -> Self {
        LiftedSolution {
            z_hat: DMatrix::zeros(n, l),
            objective: 0.0,
            p: DVector::zeros(n),
            residuals: Residuals { primal: 0.0, dual: 0.0, constraint: 0.0, gap: 0.0 },
            iterations: 0,
            converged: true,
            block: SdpBlock { u: DVector::zeros(n), w: DMatrix::zeros(l, l), z: DMatrix::zeros(n, l) },
            min_block_eig: 0.0,
            dual_norm: 0.0,
            dual_objective: 0.0,
            duality_gap: 0.0,
            warnings: Vec::new(),
        }
    }

    /// Dual certificate matrix X*(p).
    pub fn certificate(&self, subspace: &SubspaceModel) -> Result<DMatrix<C64>> {
        lift_adjoint(&self.p, subspace)
    }
}

/// Atomic norm together with its optimality evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomicNormReport {
    pub value: f64,
    /// Dual matrix Y with ‖Y‖*_A ≈ 1 and Re⟨Z, Y⟩ ≈ value.
    #[serde(with = "cjson::dmatrix")]
    pub certificate: DMatrix<C64>,
    pub certificate_norm: f64,
    pub lower_bound: f64,
    pub iterations: usize,
}

pub fn atomic_norm(z: &DMatrix<C64>, opts: &SolverOptions) -> Result<f64> {
    atomic_norm_report(z, opts).map(|r| r.value)
}

/// Atomic norm of Z. The lower bound Re⟨Z, Y⟩/max(1, ‖Y‖*_A) is valid for
/// any Y, so it brackets the value independently of solver accuracy.
pub fn atomic_norm_report(z: &DMatrix<C64>, opts: &SolverOptions) -> Result<AtomicNormReport> {
    opts.validate()?;
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::domain("Z has non-finite entries"));
    }
    let (n, l) = z.shape();
    if z.norm() == 0.0 {
        return Ok(AtomicNormReport {
            value: 0.0,
            certificate: DMatrix::zeros(n, l),
            certificate_norm: 0.0,
            lower_bound: 0.0,
            iterations: 0,
        });
    }
    let out = admm::run(&Constraint::Fixed(z), n, l, opts)?;
    let certificate = &out.multiplier * C64::new(2.0, 0.0);
    let (certificate_norm, _) = dual_atomic_norm(&certificate, &opts.dual_norm);
    let lower_bound = crate::lifting::inner(z, &certificate).re / certificate_norm.max(1.0);
    if !out.converged {
        let sol = LiftedSolution {
            z_hat: out.z.clone(),
            objective: out.objective,
            p: DVector::zeros(0),
            residuals: Residuals { primal: out.primal_res, dual: out.dual_res, constraint: 0.0, gap: out.gap },
            iterations: out.iterations,
            converged: false,
            block: SdpBlock { u: out.u, w: out.w, z: out.z },
            min_block_eig: out.min_eig,
            dual_norm: certificate_norm,
            dual_objective: lower_bound,
            duality_gap: out.gap,
            warnings: Vec::new(),
        };
        return Err(not_converged(sol, out.history, out.stalled));
    }
    Ok(AtomicNormReport {
        value: out.objective,
        certificate,
        certificate_norm,
        lower_bound,
        iterations: out.iterations,
    })
}

/// Dispatches on the instance noise level.
pub fn solve(inst: &ProblemInstance, opts: &SolverOptions) -> Result<LiftedSolution> {
    if inst.is_noiseless() {
        solve_noiseless(inst, opts)
    } else {
        solve_noisy(inst, opts)
    }
}

/// min ‖Z‖_A s.t. X(Z) = y.
pub fn solve_noiseless(inst: &ProblemInstance, opts: &SolverOptions) -> Result<LiftedSolution> {
    if !inst.is_noiseless() {
        return Err(Error::domain("solve_noiseless needs a zero noise level"));
    }
    solve_lifted(inst, opts)
}

/// min ‖Z‖_A s.t. ‖X(Z) − y‖₂ ≤ ε.
pub fn solve_noisy(inst: &ProblemInstance, opts: &SolverOptions) -> Result<LiftedSolution> {
    if inst.is_noiseless() {
        return Err(Error::domain("solve_noisy needs a positive noise level"));
    }
    solve_lifted(inst, opts)
}

fn solve_lifted(inst: &ProblemInstance, opts: &SolverOptions) -> Result<LiftedSolution> {
    opts.validate()?;
    let (n, l) = (inst.n(), inst.l());
    let eps = inst.noise_level;
    let y = &inst.y;
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::domain("y has non-finite entries"));
    }
    let y_norm = y.norm();
    if y_norm <= eps {
        // Z = 0 is feasible with norm 0; p = 0 is dual optimal.
        return Ok(LiftedSolution::zero(n, l));
    }
    let constraint = if eps == 0.0 {
        Constraint::Equality { y, subspace: &inst.subspace }
    } else {
        Constraint::Ball { y, subspace: &inst.subspace, eps }
    };
    let out = admm::run(&constraint, n, l, opts)?;
    let p = extract_dual(&out.multiplier, &inst.subspace);
    let sol = finish(inst, opts, out.clone_parts(), p)?;
    if !out.converged {
        return Err(not_converged(sol, out.history, out.stalled));
    }
    Ok(sol)
}

/// p with X*(p) closest to 2Λ₁₂, where Λ₁₂ is the off-diagonal block of the
/// PSD multiplier. Rows with zero subspace norm get p_n = 0.
pub fn extract_dual(multiplier: &DMatrix<C64>, subspace: &SubspaceModel) -> DVector<C64> {
    admm::multiplier_to_dual(multiplier, subspace.matrix(), &subspace.row_norms_sqr())
}

struct Parts {
    u: DVector<C64>,
    w: DMatrix<C64>,
    z: DMatrix<C64>,
    objective: f64,
    primal: f64,
    dual: f64,
    gap: f64,
    min_eig: f64,
    trace: f64,
    iterations: usize,
    converged: bool,
}

impl admm::AdmmOutput {
    fn clone_parts(&self) -> Parts {
        Parts {
            u: self.u.clone(),
            w: self.w.clone(),
            z: self.z.clone(),
            objective: self.objective,
            primal: self.primal_res,
            dual: self.dual_res,
            gap: self.gap,
            min_eig: self.min_eig,
            trace: self.trace,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

fn finish(inst: &ProblemInstance, opts: &SolverOptions, o: Parts, p: DVector<C64>) -> Result<LiftedSolution> {
    let eps = inst.noise_level;
    let y = &inst.y;
    let fit = lift_forward(&o.z, &inst.subspace)? - y;
    let constraint = if eps == 0.0 { fit.norm() / y.norm() } else { fit.norm() / eps };
    let cert = lift_adjoint(&p, &inst.subspace)?;
    let (dual_norm, _) = dual_atomic_norm(&cert, &opts.dual_norm);
    let ip: C64 = y.iter().zip(p.iter()).map(|(y, p)| y.conj() * p).sum();
    let dual_objective = ip.re - eps * p.norm();
    let duality_gap = (dual_objective - o.objective).abs() / (1.0 + o.objective.abs());

    let mut warnings = Vec::new();
    if dual_norm > 1.0 + opts.tol_dual {
        warnings.push(format!("dual vector infeasible: ‖X*(p)‖* = {dual_norm:.6}"));
    }
    if duality_gap > opts.tol_gap {
        warnings.push(format!("duality gap {duality_gap:.3e} above tolerance"));
    }
    if o.min_eig < -opts.tol_psd * (1.0 + o.trace.abs()) {
        warnings.push(format!("block matrix not PSD: min eigenvalue {:.3e}", o.min_eig));
    }
    let feas_ok = if eps == 0.0 {
        constraint <= opts.tol_feas.max(10.0 * opts.stop_residual)
    } else {
        constraint <= 1.0 + opts.tol_feas.max(10.0 * opts.stop_residual)
    };
    if !feas_ok {
        warnings.push(format!("data constraint residual {constraint:.3e}"));
    }
    Ok(LiftedSolution {
        z_hat: o.z.clone(),
        objective: o.objective,
        p,
        residuals: Residuals { primal: o.primal, dual: o.dual, constraint, gap: o.gap },
        iterations: o.iterations,
        converged: o.converged,
        block: SdpBlock { u: o.u, w: o.w, z: o.z },
        min_block_eig: o.min_eig,
        dual_norm,
        dual_objective,
        duality_gap,
        warnings,
    })
}

fn not_converged(sol: LiftedSolution, history: Vec<IterationRecord>, stalled: bool) -> Error {
    Error::NotConverged {
        iterations: sol.iterations,
        primal: sol.residuals.primal,
        dual: sol.residuals.dual,
        gap: sol.residuals.gap,
        stalled,
        history,
        last: Box::new(sol),
    }
}

/// The solution, or the last iterate when the iteration cap was hit.
/// Other errors pass through.
pub fn solution_or_last(r: Result<LiftedSolution>) -> Result<LiftedSolution> {
    match r {
        Err(Error::NotConverged { last, .. }) => Ok(*last),
        other => other,
    }
}
