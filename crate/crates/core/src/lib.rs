//! Blind spike deconvolution by lifting and atomic-norm minimization.
//!
//! Measurements y_n = g_n x_n of a spike spectrum x through an unknown point
//! spread function g = Bh are linear in the rank-one matrix Z = x hᵀ. The crate
//! recovers Z by atomic-norm minimization, reads the spike delays off the dual
//! polynomial and factorizes Z into x and h.

// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod cjson;
pub mod dense;
pub mod error;
pub mod experiment;
pub mod lifting;
pub mod localize;
pub mod rng;
pub mod sdp;
pub mod signal;
pub mod trigpoly;

pub type C64 = num_complex::Complex64;

pub use error::{Error, Result};
pub use lifting::{lift_adjoint, lift_forward};
pub use sdp::{
    atomic_norm, dual_atomic_norm, extract_dual, solve, solve_noiseless, solve_noisy, LiftedSolution, SolverOptions,
};
pub use signal::{Indexing, ProblemInstance, SpikeSignal, SubspaceKind, SubspaceModel};
