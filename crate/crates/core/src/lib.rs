//! Regime-aware implied-volatility analytics.
//!
//! The crate covers the full pipeline from raw option quotes to per-regime
//! stochastic-volatility diagnostics:
//!
//! 1. [`market_data`] — quote normalization into (τ, k, iv) observations,
//!    liquidity/maturity filters, and imputed panel matrices.
//! 2. [`filtering_network`] — TMFG construction and LoGo sparse precision
//!    matrices.
//! 3. [`icc`] — inverse-covariance temporal clustering of panel timestamps
//!    into market regimes with a switch penalty.
//! 4. [`surface`] — per-timestamp bivariate polynomial regression of the IV
//!    surface.
//! 5. [`isvm`] — inversion of surface coefficients into drift/leverage/vol-of-vol
//!    targets, local-linear smoothing, and bootstrap confidence bands.
//! 6. [`synth`] — a ground-truth market simulator (regime-switching stochastic
//!    volatility with optional jumps, Black–Scholes pricing, IV inversion).
//! 7. [`eval`] — RMSE/MAE summaries, clustered-vs-unclustered comparison, and
//!    label-recovery scoring.
//! 8. [`pipeline`] — orchestration glue tying the stages together per rolling
//!    window.

pub mod error;
pub mod eval;
pub mod filtering_network;
pub mod icc;
pub mod isvm;
pub mod market_data;
pub mod pipeline;
pub mod stats;
pub mod surface;
pub mod synth;

pub use error::{Error, Result};
