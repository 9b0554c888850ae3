//! Monte Carlo exposure engine for interest-rate portfolios under a
//! one-factor Hull–White short-rate model, with expected-exposure
//! sensitivities to yield-curve market quotes computed by polynomial
//! collocation.
//!
//! # Pipeline
//!
//! 1. [`curve`]: bootstrap a discount curve from par-swap quotes; re-bootstrap
//!    under a 1bp shock to each quote to obtain the n "shocked markets".
//! 2. [`hullwhite`]: fit a Hull–White model to each curve (the model
//!    parameters are shared; only the fitted drift changes) and simulate all
//!    markets on common random numbers with an exact-in-distribution scheme.
//! 3. [`products`]: swap, portfolio, and Bermudan-swaption valuation
//!    functions `V_i(t, r)`, including LSMC exercise boundaries.
//! 4. [`interp`]: Gauss nodes of each market's short-rate marginal and
//!    barycentric polynomial surrogates `g`, `g_i`, and the two-level
//!    low-order difference surrogates `g + h_i`.
//! 5. [`exposure`] / [`sensitivity`]: expected positive exposure and its
//!    quote sensitivities by exact revaluation (the expensive reference) and
//!    by the surrogates (the cheap estimators), with error metrics, cost
//!    accounting, and empirical error-bound diagnostics.
//! 6. [`xva`]: unilateral CVA from the exposure profile, with and without
//!    wrong-way risk.
//!
//! The [`experiments`] module wires these together into reproducible,
//! seeded experiment runs; the `xva-collocate` binary exposes them as CLI
//! subcommands driven by a TOML config (see [`config`]).

pub mod config;
pub mod curve;
pub mod error;
pub mod experiments;
pub mod exposure;
pub mod hullwhite;
pub mod interp;
pub mod products;
pub mod sensitivity;
pub mod xva;

pub use error::{Error, Result};
