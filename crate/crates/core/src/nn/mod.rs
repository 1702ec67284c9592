//! Shared neural-network machinery: parameter traversal, MSE loss, mini-batch SGD.
//!
//! Every forecaster maps a window of `lag` normalized values to one scalar. Families
//! implement [`Network`] with an analytic backward pass; the training loop here is
//! family-agnostic.

pub mod activation;
pub mod linalg;
pub mod mlp;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WindowedDataset;

pub use activation::Activation;
pub use linalg::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} targets vs {1} outputs")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(NnError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A window-to-scalar model with analytic gradients.
pub trait Network: Clone {
    /// Window length the network consumes.
    fn lag(&self) -> usize;

    fn predict(&self, window: &[f64]) -> Result<f64>;

    /// Runs one sample forward, asks `seed` for dLoss/dOutput at the produced output, then
    /// backpropagates, adding dLoss/dTheta into the matching entries of `grad`.
    /// Returns the forward output.
    fn accumulate_gradient(
        &self,
        window: &[f64],
        seed: &mut dyn FnMut(f64) -> f64,
        grad: &mut Self,
    ) -> Result<f64>;

    /// Same shape, all parameters zero.
    fn zeros_like(&self) -> Self;

    /// Visits every parameter buffer in a fixed order.
    fn visit_params(&self, f: &mut dyn FnMut(&[f64]));

    /// Mutable counterpart of [`Network::visit_params`], same order.
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }
}

pub fn flat_params<N: Network>(net: &N) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.num_params());
    net.visit_params(&mut |p| out.extend_from_slice(p));
    out
}

pub fn set_flat_params<N: Network>(net: &mut N, values: &[f64]) {
    let mut off = 0;
    net.visit_params_mut(&mut |p| {
        p.copy_from_slice(&values[off..off + p.len()]);
        off += p.len();
    });
    assert_eq!(off, values.len(), "parameter count mismatch");
}

pub fn mse_loss(targets: &[f64], outputs: &[f64]) -> Result<f64> {
    if targets.len() != outputs.len() {
        return Err(NnError::LengthMismatch(targets.len(), outputs.len()));
    }
    if targets.is_empty() {
        return Err(NnError::Empty);
    }
    let s: f64 = targets.iter().zip(outputs).map(|(y, o)| (y - o) * (y - o)).sum();
    Ok(s / targets.len() as f64)
}

pub fn predict_all<N: Network>(net: &N, data: &WindowedDataset) -> Result<Vec<f64>> {
    check_dim(net.lag(), data.lag())?;
    data.inputs().map(|w| net.predict(w)).collect()
}

pub fn dataset_loss<N: Network>(net: &N, data: &WindowedDataset) -> Result<f64> {
    let outputs = predict_all(net, data)?;
    mse_loss(data.targets(), &outputs)
}

/// MSE over `data` and its gradient with respect to every parameter of `net`.
pub fn loss_and_gradient<N: Network>(net: &N, data: &WindowedDataset) -> Result<(f64, N)> {
    let mut grad = net.zeros_like();
    let loss = accumulate_batch(net, data, 0, data.len(), &mut grad)?;
    Ok((loss, grad))
}

fn accumulate_batch<N: Network>(
    net: &N,
    data: &WindowedDataset,
    from: usize,
    to: usize,
    grad: &mut N,
) -> Result<f64> {
    let n = (to - from) as f64;
    let mut loss = 0.0;
    for i in from..to {
        let target = data.targets()[i];
        net.accumulate_gradient(
            data.input(i),
            &mut |output| {
                let err = output - target;
                loss += err * err / n;
                2.0 * err / n
            },
            grad,
        )?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(NnError::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch MSE on the full training and validation windows, after each epoch's updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub train_loss_per_epoch: Vec<f64>,
    pub val_loss_per_epoch: Vec<f64>,
}

/// Loss multiple over the predict-the-mean baseline beyond which a run counts as diverged.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

/// Applies `params -= learning_rate * grad`.
pub fn sgd_step<N: Network>(net: &mut N, grad: &N, learning_rate: f64) {
    let g = flat_params(grad);
    let mut off = 0;
    net.visit_params_mut(&mut |p| {
        for x in p.iter_mut() {
            *x -= learning_rate * g[off];
            off += 1;
        }
    });
}

fn zero_params<N: Network>(net: &mut N) {
    net.visit_params_mut(&mut |p| p.fill(0.0));
}

/// Mini-batch SGD over sequential (unshuffled) batches; the last batch may be short.
pub fn train<N: Network>(
    mut net: N,
    train_data: &WindowedDataset,
    val_data: &WindowedDataset,
    opts: &TrainOptions,
) -> Result<(N, TrainingTrace)> {
    opts.validate()?;
    check_dim(net.lag(), train_data.lag())?;
    check_dim(net.lag(), val_data.lag())?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(NnError::Empty);
    }
    let baseline = {
        let t = train_data.targets();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        t.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / t.len() as f64
    };

    let mut trace = TrainingTrace::default();
    let mut grad = net.zeros_like();
    for epoch in 1..=opts.epochs {
        let mut from = 0;
        while from < train_data.len() {
            let to = (from + opts.batch_size).min(train_data.len());
            zero_params(&mut grad);
            let batch_loss = accumulate_batch(&net, train_data, from, to, &mut grad)?;
            if !batch_loss.is_finite() {
                return Err(NnError::DivergenceDetected { epoch, loss: batch_loss });
            }
            sgd_step(&mut net, &grad, opts.learning_rate);
            from = to;
        }
        let train_loss = dataset_loss(&net, train_data)?;
        let val_loss = dataset_loss(&net, val_data)?;
        let blown_up = baseline > 0.0 && train_loss > DIVERGENCE_FACTOR * baseline;
        if !train_loss.is_finite() || !val_loss.is_finite() || blown_up {
            let loss = if train_loss.is_finite() { val_loss.max(train_loss) } else { train_loss };
            return Err(NnError::DivergenceDetected { epoch, loss });
        }
        trace.train_loss_per_epoch.push(train_loss);
        trace.val_loss_per_epoch.push(val_loss);
    }
    Ok((net, trace))
}

/// Fills `buf` with Glorot-uniform draws for a layer with the given fan-in/fan-out.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, buf: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in buf {
        *x = rng.random_range(-limit..limit);
    }
}
