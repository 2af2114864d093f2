//! Epoch loop over scaled training data.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{mlp_backward, mlp_forward, mlp_predict, mse_loss, MlpModel};
use crate::numerics::{Matrix, RngState};
use crate::optim::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Mini(usize),
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Mini(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(BatchSize::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(BatchSize::Mini(n)),
            _ => Err(Error::Config(format!(
                "batch must be 'full' or a positive integer, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: u64,
    pub batch: BatchSize,
    pub seed: u64,
    /// Loss is reported every this many epochs; 0 disables reporting.
    pub log_every: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Full-training-set MSE (scaled units) after the final epoch.
    pub final_loss: f64,
    /// `(epoch, loss)` pairs at each logging point.
    pub logged: Vec<(u64, f64)>,
    /// Total completed epochs, including any resumed from a checkpoint.
    pub epochs_done: u64,
}

/// Shuffle stream for one epoch. Keyed on the absolute epoch so a resumed
/// run visits minibatches in the same order as an uninterrupted one.
fn epoch_rng(seed: u64, epoch: u64) -> RngState {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    RngState::new(mixed ^ (mixed >> 31))
}

fn step_on(model: &mut MlpModel, optimizer: &mut Optimizer, x: &Matrix, y: &Matrix) -> Result<f64> {
    let trace = mlp_forward(model, x)?;
    let loss = mse_loss(trace.output(), y)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("training loss became {loss}")));
    }
    let grads = mlp_backward(model, &trace, y)?;
    optimizer.step(model, &grads)?;
    Ok(loss)
}

/// Runs `settings.epochs` epochs starting after `start_epoch` completed ones.
///
/// Full-batch mode takes one optimizer step per epoch on the whole set.
/// Minibatch mode shuffles rows once per epoch and steps on consecutive
/// chunks; the last chunk may be short. `on_log` receives `(epoch, loss)`
/// where loss is the full-set MSE at the end of that epoch.
pub fn train(
    model: &mut MlpModel,
    optimizer: &mut Optimizer,
    x: &Matrix,
    y: &Matrix,
    settings: &TrainSettings,
    start_epoch: u64,
    mut on_log: impl FnMut(u64, f64),
) -> Result<TrainOutcome> {
    if x.rows() != y.rows() || y.cols() != 1 {
        return Err(Error::shape("train", x.shape_str(), y.shape_str()));
    }
    let n = x.rows();
    let mut logged = Vec::new();
    let end = start_epoch + settings.epochs;
    for epoch in start_epoch + 1..=end {
        match settings.batch {
            BatchSize::Mini(size) if size < n => {
                let mut order: Vec<usize> = (0..n).collect();
                epoch_rng(settings.seed, epoch).shuffle(&mut order);
                for chunk in order.chunks(size) {
                    step_on(
                        model,
                        optimizer,
                        &x.select_rows(chunk)?,
                        &y.select_rows(chunk)?,
                    )?;
                }
            }
            _ => {
                step_on(model, optimizer, x, y)?;
            }
        }
        if settings.log_every > 0 && epoch % settings.log_every == 0 {
            let loss = full_loss(model, x, y)?;
            logged.push((epoch, loss));
            on_log(epoch, loss);
        }
    }
    Ok(TrainOutcome {
        final_loss: full_loss(model, x, y)?,
        logged,
        epochs_done: end,
    })
}

pub fn full_loss(model: &MlpModel, x: &Matrix, y: &Matrix) -> Result<f64> {
    let loss = mse_loss(&mlp_predict(model, x)?, y)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("training loss became {loss}")));
    }
    Ok(loss)
}
