//! Micro-climate forecasting toolkit.
//!
//! Commercial weather-station forecasts are issued for a station that can be
//! many miles from a field; conditions at a specific sensor deviate from them
//! systematically. This crate learns that deviation: it aligns on-farm sensor
//! streams with station forecasts, decomposes the signals into causal
//! multi-scale bands, trains a multi-horizon residual model, and predicts
//! local conditions as `station forecast + predicted error`.
//!
//! The pipeline, end to end:
//!
//! 1. [`timeseries`] — resample raw readings onto a uniform grid, fill short
//!    gaps, keep a validity mask.
//! 2. [`align`] — pair predictor histories, station forecasts and future
//!    actuals into supervised rows.
//! 3. [`decompose`] — causal à-trous decomposition into trend + detail bands.
//! 4. [`forecaster`] — per-scale features, residual model training
//!    (hand-written backprop, gradient-checked), multi-horizon prediction.
//! 5. [`transfer`] — adapt a trained bundle to a new site with scarce data.
//! 6. [`evaluation`] — RMSE/MAPE/accuracy, rolling-origin backtests,
//!    baselines, figure data.
//! 7. [`synthgen`] — deterministic synthetic farm scenarios with a hidden
//!    truth trace, the oracle the whole crate is verified against.
//! 8. [`providers`] / [`service`] — forecast-source abstraction and the
//!    HTTP/JSON serving layer with file-backed persistence.
//!
//! Each major capability has a runnable demo under `examples/`; the `microclimate`
//! binary exposes the same operations as subcommands.

pub mod align;
pub mod csvio;
pub mod decompose;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod pipeline;
pub mod presets;
pub mod providers;
pub mod service;
pub mod synthgen;
pub mod timeseries;
pub mod transfer;

pub mod cli;

pub use error::{Error, Result};
