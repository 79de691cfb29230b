//! Direct solve of the dual program
//!
//!   max Re⟨p, y⟩  s.t.  [[H, X*(p)], [X*(p)ᴴ, I_L]] ⪰ 0,
//!                       Σ_i H_{i+k,i} = N·δ_k  (k = 0..N−1),
//!
//! the bounded-real form of ‖X*(p)‖*_A ≤ 1 with unit-norm atoms c(τ): the
//! diagonal-sum constraints make c(τ)ᴴHc(τ) ≡ 1. Used only to cross-check
//! the multiplier-based dual. Solved by ADMM with the same splitting as the
//! primal: affine projection for (H, p), eigendecomposition for the cone.

use nalgebra::{DMatrix, DVector};

use super::psd::project_psd;
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::signal::ProblemInstance;
use crate::C64;

#[derive(Debug, Clone)]
pub struct DualSdpSolution {
    pub p: DVector<C64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve_dual_sdp(inst: &ProblemInstance, opts: &SolverOptions) -> Result<DualSdpSolution> {
    opts.validate()?;
    if !inst.is_noiseless() {
        return Err(Error::domain("the direct dual path covers the noiseless program only"));
    }
    let (n, l) = (inst.n(), inst.l());
    let b = inst.subspace.matrix();
    let rn = inst.subspace.row_norms_sqr();
    if rn.contains(&0.0) {
        return Err(Error::Degenerate("zero subspace row leaves p unbounded".into()));
    }
    let y_norm = inst.y.norm();
    if y_norm == 0.0 {
        return Ok(DualSdpSolution { p: DVector::zeros(n), objective: 0.0, iterations: 0, converged: true });
    }
    // The maximizer does not depend on the scale of y.
    let y = &inst.y / C64::new(y_norm, 0.0);
    let d = n + l;
    let mut rho = opts.rho_init;
    let mut s = DMatrix::<C64>::zeros(d, d);
    let mut u = DMatrix::<C64>::zeros(d, d);
    let mut p = DVector::zeros(n);
    let mut objective = 0.0;
    let alpha = opts.relaxation;

    for it in 1..=opts.max_iter {
        let g = &s - &u;
        let mut m = DMatrix::<C64>::zeros(d, d);
        // H: Hermitian part of G₁₁ with each diagonal shifted to its target sum.
        for k in 0..n {
            let len = (n - k) as f64;
            let mut acc = C64::new(0.0, 0.0);
            for i in k..n {
                acc += (g[(i, i - k)] + g[(i - k, i)].conj()) * 0.5;
            }
            let target = if k == 0 { n as f64 } else { 0.0 };
            let shift = (acc - target) / len;
            for i in k..n {
                let v = (g[(i, i - k)] + g[(i - k, i)].conj()) * 0.5 - shift;
                m[(i, i - k)] = v;
                m[(i - k, i)] = v.conj();
            }
            if k == 0 {
                for i in 0..n {
                    m[(i, i)].im = 0.0;
                }
            }
        }
        // p: minimizes −Re⟨p, y⟩ + ρ‖X*(p) − A‖², A the symmetrized G₁₂.
        for r in 0..n {
            let mut s_r = C64::new(0.0, 0.0);
            for i in 0..l {
                let a = (g[(r, n + i)] + g[(n + i, r)].conj()) * 0.5;
                s_r += a * b[(r, i)];
            }
            p[r] = (s_r + y[r] / (2.0 * rho)) / rn[r];
        }
        for r in 0..n {
            for i in 0..l {
                let v = p[r] * b[(r, i)].conj();
                m[(r, n + i)] = v;
                m[(n + i, r)] = v.conj();
            }
        }
        for i in 0..l {
            m[(n + i, n + i)] = C64::new(1.0, 0.0);
        }

        let m_hat = &m * C64::new(alpha, 0.0) + &s * C64::new(1.0 - alpha, 0.0);
        let s_new = project_psd(&(&m_hat + &u))?;
        u += &m_hat - &s_new;
        let rp = (&m - &s_new).norm() / m.norm().max(s_new.norm()).max(1e-300);
        let rd = rho * (&s_new - &s).norm() / (rho * u.norm()).max(1e-300);
        s = s_new;
        let new_obj: f64 = y.iter().zip(p.iter()).map(|(y, p)| (y.conj() * p).re).sum();
        let obj_change = (new_obj - objective).abs() / (1.0 + new_obj.abs());
        objective = new_obj;

        if rp < opts.stop_residual && rd < opts.stop_residual && obj_change < opts.stop_gap {
            return Ok(DualSdpSolution { p, objective: objective * y_norm, iterations: it, converged: true });
        }
        if it % opts.rho_update_every == 0 {
            if rp > opts.rho_balance * rd {
                rho *= opts.rho_factor;
                u /= C64::new(opts.rho_factor, 0.0);
            } else if rd > opts.rho_balance * rp {
                rho /= opts.rho_factor;
                u *= C64::new(opts.rho_factor, 0.0);
            }
        }
    }
    Ok(DualSdpSolution { p, objective: objective * y_norm, iterations: opts.max_iter, converged: false })
}
