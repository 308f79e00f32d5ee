//! Pricing, calibration and Monte Carlo verification for European options
//! and zero-recovery bonds written on a defaultable stock.
//!
//! The stock carries a doubly-stochastic default intensity
//! `λ = β σ² + f` and a volatility driven by fast and slow mean-reverting
//! factors. Option prices are approximated by a leading-order
//! Black-Scholes price with a rate bump `λ̄` plus first-order corrections
//! that are affine in a small set of group parameters.
//!
//! Module map:
//!
//! - [`black_scholes`]: leading-order price `C₀₀`, the greek blocks and vega.
//! - [`pricer`]: the four approximation families (7p, 5p, 3p, SV-only).
//! - [`implied_vol`]: exact inversion, the `I₀` expansion and surfaces.
//! - [`bond`]: zero-recovery bond approximation and spread mapping.
//! - [`mc`]: five-factor Monte Carlo oracle and effective parameters.
//! - [`calibration`]: vega-weighted daily calibration (fixed or free `λ̄`).
//! - [`io`], [`synthetic`], [`workflows`]: files, synthetic data and the
//!   command workflows behind the CLI.

pub mod black_scholes;
pub mod bond;
pub mod calibration;
pub mod curve;
pub mod error;
pub mod implied_vol;
pub mod io;
pub mod mc;
pub mod pricer;
pub mod synthetic;
pub mod workflows;

pub use black_scholes::{LevelParams, QuoteContext};
pub use curve::DiscountCurve;
pub use error::{Error, Result};
pub use pricer::{ApproxParams, ModelKind, PriceQuality};

/// Calendar days per year used for option maturities.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Trading days per year used for realized variance.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
