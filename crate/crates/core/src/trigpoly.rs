//! Vector-valued trigonometric polynomials P(τ) = Σ_n c_n e^{−j2πnτ} ∈ C^L.
//!
//! Used for the dual atomic norm, the dual polynomial and the certificate.
//! Dense grids are evaluated with one FFT per channel; peaks are polished
//! with Newton steps on ‖P(τ)‖² using analytic derivatives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;

use crate::C64;

#[derive(Debug, Clone)]
pub struct TrigPoly {
    first_index: i64,
    /// Row m holds the coefficient vector of frequency `first_index + m`.
    coeffs: DMatrix<C64>,
}

/// ‖P‖² and its first two τ-derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub struct NormSqJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl TrigPoly {
    pub fn new(first_index: i64, coeffs: DMatrix<C64>) -> Self {
        TrigPoly { first_index, coeffs }
    }

    pub fn channels(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    pub fn first_index(&self) -> i64 {
        self.first_index
    }

    /// Half the spread of the frequency support. ‖P‖ changes at most at rate
    /// 2π·half_span·sup‖P‖ (Bernstein), since a unimodular phase factor
    /// recenters the support without changing the norm.
    pub fn half_span(&self) -> f64 {
        (self.coeffs.nrows().saturating_sub(1)) as f64 / 2.0
    }

    /// P(τ) and its derivatives up to `order`.
    pub fn eval_derivs(&self, tau: f64, order: usize) -> Vec<DVector<C64>> {
        let l = self.channels();
        let mut out = vec![DVector::zeros(l); order + 1];
        for (m, row) in self.coeffs.row_iter().enumerate() {
            let n = (self.first_index + m as i64) as f64;
            let e = C64::from_polar(1.0, -2.0 * PI * n * tau);
            let w = C64::new(0.0, -2.0 * PI * n);
            let mut f = e;
            for d in out.iter_mut() {
                for (acc, c) in d.iter_mut().zip(row.iter()) {
                    *acc += c * f;
                }
                f *= w;
            }
        }
        out
    }

    pub fn eval(&self, tau: f64) -> DVector<C64> {
        self.eval_derivs(tau, 0).swap_remove(0)
    }

    pub fn norm_at(&self, tau: f64) -> f64 {
        self.eval(tau).norm()
    }

    pub fn norm_sq_jet(&self, tau: f64) -> NormSqJet {
        let d = self.eval_derivs(tau, 2);
        let value = d[0].norm_squared();
        let d1 = 2.0 * d[0].dotc(&d[1]).re;
        let d2 = 2.0 * (d[1].norm_squared() + d[0].dotc(&d[2]).re);
        NormSqJet { value, d1, d2 }
    }

    /// ‖P(g/G)‖ for g = 0..G.
    pub fn grid_norms(&self, grid: usize) -> Vec<f64> {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(grid);
        let mut acc = vec![0.0; grid];
        let mut buf = vec![C64::new(0.0, 0.0); grid];
        for col in self.coeffs.column_iter() {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for (m, c) in col.iter().enumerate() {
                buf[m % grid] += c;
            }
            fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// Maximize ‖P‖ near a sampled peak `tau` whose neighbours lie `max_step`
    /// away. When (‖P‖²)′ changes sign over [τ − h, τ + h] the root is found by
    /// Newton steps safeguarded with bisection, which also handles very flat
    /// peaks where the curvature vanishes. Otherwise falls back to at most
    /// `steps` clipped Newton steps. Returns (τ, ‖P(τ)‖), never worse than the
    /// start.
    pub fn refine_peak(&self, tau: f64, steps: usize, max_step: f64, tol: f64) -> (f64, f64) {
        let start = (tau, self.norm_at(tau));
        let (mut a, mut b) = (tau - max_step, tau + max_step);
        let better = |c: (f64, f64), best: (f64, f64)| if c.1 >= best.1 { c } else { best };
        if !(self.norm_sq_jet(a).d1 > 0.0 && self.norm_sq_jet(b).d1 < 0.0) {
            return better(self.newton_ascent(tau, steps, max_step, tol), start);
        }
        let mut t = tau;
        for _ in 0..steps + 100 {
            let jet = self.norm_sq_jet(t);
            if jet.d1 > 0.0 {
                a = t;
            } else {
                b = t;
            }
            let newton = t - jet.d1 / jet.d2;
            let next = if jet.d2 < 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            let moved = (next - t).abs();
            t = next;
            if moved < tol || b - a < tol {
                break;
            }
        }
        let t = t.rem_euclid(1.0);
        better((t, self.norm_at(t)), start)
    }

    fn newton_ascent(&self, tau: f64, steps: usize, max_step: f64, tol: f64) -> (f64, f64) {
        let mut t = tau;
        let mut best = (tau, self.norm_at(tau));
        for _ in 0..steps {
            let jet = self.norm_sq_jet(t);
            if jet.d2 >= 0.0 {
                break;
            }
            let step = (-jet.d1 / jet.d2).clamp(-max_step, max_step);
            t = (t + step).rem_euclid(1.0);
            let v = self.norm_at(t);
            if v >= best.1 {
                best = (t, v);
            }
            if step.abs() < tol {
                break;
            }
        }
        best
    }

    /// Indices of strict-or-plateau local maxima of a periodic sampled curve.
    pub fn local_maxima(values: &[f64]) -> Vec<usize> {
        let g = values.len();
        (0..g)
            .filter(|&i| {
                let prev = values[(i + g - 1) % g];
                let next = values[(i + 1) % g];
                values[i] > prev && values[i] >= next
            })
            .collect()
    }
}
