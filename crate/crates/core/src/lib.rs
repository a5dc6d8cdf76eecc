//! Bayesian sequential least-squares estimation of the drift of a Wiener
//! process.
//!
//! An unobservable drift `X` with known prior is observed through
//! `Y(t) = X·t + W(t)`. Stopping at time `τ` costs the squared estimation
//! error of the posterior mean plus `c·τ`. The crate provides:
//!
//! - [`prior`]: prior laws, quadrature tables and posterior quantities
//!   `F`, `G`, `H`;
//! - [`dispersion`]: the dispersion function `Ψ(t, x) = H(t, G_t⁻¹(x))`
//!   and PDE residual diagnostics;
//! - [`closed_form`]: closed-form Gaussian, Bernoulli, half-normal and
//!   symmetric-mixture results used as oracles;
//! - [`stopping_solver`]: the backward obstacle-problem solver for the
//!   value function, region extraction and structural checks;
//! - [`montecarlo`]: exact-filter path simulation and policy evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod dispersion;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod prior;
pub mod stopping_solver;

pub use error::{Error, Result};
