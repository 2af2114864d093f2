//! From-scratch multilayer perceptron regression with Adam, built for
//! monthly groundwater level forecasting.
//!
//! Pipeline: well and climate CSVs are read ([`data`]), wells are collapsed
//! into one weighted-mean level series, lagged supervised examples are built,
//! split 80/20 in time order and scaled. A one-hidden-layer ReLU network
//! ([`network`]) is trained on mean squared error with Adam ([`optim`]) and
//! scored with RMSE, MAE, MSE and R² ([`metrics`]).
//!
//! Everything runs in `f64` with a fixed floating-point evaluation order, so
//! a given config, seed and input set reproduces byte-identical outputs.

// `!(x > 0.0)` is used on purpose so NaN falls into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model_file;
pub mod network;
pub mod numerics;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngState};
