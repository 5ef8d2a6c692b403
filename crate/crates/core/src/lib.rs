//! Executable machinery for subgeometric convergence of Markov processes in
//! Wasserstein distance.
//!
//! - [`rate_kernel`]: concave rate functions, the `H_phi` transform, the
//!   convergence bound and the Petrov recursion bound.
//! - [`transport`]: bounded metrics, empirical measures, exact discrete
//!   optimal transport, total variation and coupling bounds.
//! - [`chains`]: the digit-shift autoregression and an Euler–Maruyama
//!   integrator for stochastic delay equations.
//! - [`lyapunov`]: statistical verification of drift conditions,
//!   d-smallness and one-step contraction in the semimetric `l`.
//! - [`harness`]: convergence experiments, constant fitting and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod numerics;
pub mod rate_kernel;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
