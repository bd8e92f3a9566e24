//! Core algorithms for measuring how predictable a quantized price series is
//! and how close simple online predictors get to that limit.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, tick parsing
//! and the command line live in the `tickbound` crate.
//!
//! Pipeline, per stock:
//!
//! 1. [`series`]: group tick records into a [`series::PriceSeries`] and decide
//!    whether it is fit for analysis.
//! 2. [`quantize`]: turn prices into discrete states.
//! 3. [`entropy`]: Lempel-Ziv match-length estimate of the entropy rate.
//! 4. [`predictability`]: invert the Fano relation for the accuracy bound.
//! 5. [`predict`]: second-order Markov chain and diffusion-kernel predictors,
//!    trained on the first day and updated after every prediction.
//! 6. [`evaluate`]: accuracy, RMSE and RMSE/price ratio.
//! 7. [`stats`]: volatility, Spearman, one-way ANOVA and feature binning.
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod entropy;
mod error;
pub mod evaluate;
pub mod predict;
pub mod predictability;
pub mod quantize;
pub mod series;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use quantize::{QuantizationScheme, QuantizedSequence, State};
pub use series::{Price, PriceSeries, TickRecord};
