//! Univariate time-series forecasting toolkit built around one idea: treat the
//! lag count of an LSTM forecaster as a hyperparameter and tune it jointly with
//! the network's structural hyperparameters by Gaussian-process Bayesian
//! optimization.
//!
//! The crate is organized as a pure algorithmic core with no IO:
//!
//! - [`series`] — series splitting, min-max normalization, lag-window datasets,
//!   additive seasonal decomposition, and the augmented Dickey-Fuller test.
//! - [`gp`] — Gaussian-process regression over the hyperparameter cube.
//! - [`bo`] — search spaces, expected improvement, and the optimization loop.
//! - [`lstm`] — a from-scratch two-layer LSTM regressor trained by BPTT/Adam,
//!   with recursive multi-step forecasting.
//! - [`baselines`] — seasonal naive and additive Holt-Winters forecasters.
//! - [`stats`] — forecast error metrics and the Friedman/Iman-Davenport plus
//!   Hochberg two-step multi-model comparison, with in-house special functions.
//! - [`pipeline`] — the end-to-end deseasonalize/split/optimize/retrain/forecast
//!   workflow and its fixed-lag variants.
//!
//! Everything is deterministic given the seeds threaded through the APIs. The
//! crate is `no_std`-compatible (with `alloc`); the `std` feature (default)
//! enables faster SIMD kernels and `std::error::Error` integration.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod baselines;
pub mod bo;
mod error;
pub mod gp;
pub mod linalg;
pub mod lstm;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
