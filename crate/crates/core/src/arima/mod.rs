//! ARIMA(p, d, q) baseline: differencing, conditional-sum-of-squares estimation and
//! walk-forward one-step forecasting.
//!
//! The differenced series `w` follows
//!
//! ```text
//! w_t = c + sum_{i=1..p} phi_i w_{t-i} + e_t + sum_{j=1..q} theta_j e_{t-j}
//! ```
//!
//! Pre-sample innovations are zero and the current innovation is zero in a point forecast.

pub mod nelder_mead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nelder_mead::{minimize, NelderMeadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArimaError {
    #[error("series too short: need more than {needed} values, have {have}")]
    SeriesTooShort { needed: usize, have: usize },
    #[error("invalid order (p={p}, d={d}, q={q})")]
    InvalidOrder { p: usize, d: usize, q: usize },
    #[error("expected {expected} retained head values, got {got}")]
    HeadMismatch { expected: usize, got: usize },
    #[error("insufficient history: need {needed}, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("optimizer did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("non-finite value encountered")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, ArimaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    /// Rejects only the empty model; `(0, d, 0)` with `d >= 1` is the drifting random walk.
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p + q + d == 0 {
            return Err(ArimaError::InvalidOrder { p, d, q });
        }
        Ok(Self { p, d, q })
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)
    }
}

/// A d-fold differenced series with the leading value of every intermediate level.
#[derive(Debug, Clone, PartialEq)]
pub struct Differenced {
    pub values: Vec<f64>,
    /// `heads[k]` is the first element of the k-times differenced series.
    pub heads: Vec<f64>,
}

pub fn difference(series: &[f64], d: usize) -> Result<Differenced> {
    if series.len() <= d {
        return Err(ArimaError::SeriesTooShort { needed: d, have: series.len() });
    }
    let mut values = series.to_vec();
    let mut heads = Vec::with_capacity(d);
    for _ in 0..d {
        heads.push(values[0]);
        values = values.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(Differenced { values, heads })
}

pub fn undifference(diffed: &[f64], heads: &[f64], d: usize) -> Result<Vec<f64>> {
    if heads.len() != d {
        return Err(ArimaError::HeadMismatch { expected: d, got: heads.len() });
    }
    let mut values = diffed.to_vec();
    for &head in heads.iter().rev() {
        let mut level = Vec::with_capacity(values.len() + 1);
        let mut acc = head;
        level.push(acc);
        for w in &values {
            acc += w;
            level.push(acc);
        }
        values = level;
    }
    Ok(values)
}

/// Binomial weights that rebuild `y_t` from the differenced prediction and `d` past levels:
/// `y_t = w_t + sum_k coeffs[k-1] * y_{t-k}`.
fn integration_weights(d: usize) -> Vec<f64> {
    let mut binom = vec![1.0f64];
    for _ in 0..d {
        let mut next = vec![1.0; binom.len() + 1];
        for i in 1..binom.len() {
            next[i] = binom[i - 1] + binom[i];
        }
        binom = next;
    }
    (1..=d).map(|k| if k % 2 == 1 { binom[k] } else { -binom[k] }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// In-sample innovations over the differenced training series.
    pub residuals: Vec<f64>,
    /// Sample mean of the differenced training series.
    pub mu: f64,
    pub iterations: usize,
}

impl ArimaModel {
    /// A model with fixed coefficients and no fit history.
    pub fn with_coefficients(order: ArimaOrder, c: f64, phi: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if phi.len() != order.p || theta.len() != order.q {
            return Err(ArimaError::InvalidOrder { p: phi.len(), d: order.d, q: theta.len() });
        }
        Ok(Self { order, c, phi, theta, residuals: Vec::new(), mu: c, iterations: 0 })
    }

    pub fn is_stationary(&self) -> bool {
        stable_lag_polynomial(&self.phi)
    }

    pub fn is_invertible(&self) -> bool {
        let neg: Vec<f64> = self.theta.iter().map(|t| -t).collect();
        stable_lag_polynomial(&neg)
    }

    /// In-sample innovations of the differenced series under this model's coefficients.
    pub fn innovations(&self, diffed: &[f64]) -> Vec<f64> {
        recursion(self.c, &self.phi, &self.theta, diffed).1
    }

    /// One-step predictions of the differenced series for every index; element `t` uses
    /// only `diffed[..t]`.
    pub fn predict_differenced(&self, diffed: &[f64]) -> Vec<f64> {
        recursion(self.c, &self.phi, &self.theta, diffed).0
    }
}

/// `c + sum phi_i y_{t-i} + sum theta_j e_{t-j}`, accumulated left to right.
fn point_forecast(c: f64, phi: &[f64], theta: &[f64], recent_y: &[f64], recent_eps: &[f64]) -> f64 {
    let mut yhat = c;
    for (a, y) in phi.iter().zip(recent_y) {
        yhat += a * y;
    }
    for (b, e) in theta.iter().zip(recent_eps) {
        yhat += b * e;
    }
    yhat
}

/// Runs the conditional recursion over `w`, returning one-step predictions and innovations.
/// Lags before the start of the series count as zero and innovations before index `p` are zero.
fn recursion(c: f64, phi: &[f64], theta: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = phi.len();
    let mut preds = vec![0.0; w.len()];
    let mut eps = vec![0.0; w.len()];
    let mut recent_y = vec![0.0; p];
    let mut recent_e = vec![0.0; theta.len()];
    for t in 0..w.len() {
        for (i, slot) in recent_y.iter_mut().enumerate() {
            *slot = if t > i { w[t - 1 - i] } else { 0.0 };
        }
        for (j, slot) in recent_e.iter_mut().enumerate() {
            *slot = if t > j { eps[t - 1 - j] } else { 0.0 };
        }
        preds[t] = point_forecast(c, phi, theta, &recent_y, &recent_e);
        eps[t] = if t >= p { w[t] - preds[t] } else { 0.0 };
    }
    (preds, eps)
}

/// True when all roots of `1 - sum a_i z^i` lie outside the unit circle, via the
/// step-down (reverse Levinson–Durbin) recursion.
pub fn stable_lag_polynomial(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / denom).collect();
        a = next;
    }
    true
}

/// Point forecast from explicit history. `recent_y[0]` is `y_{t-1}`, `recent_eps[0]` is `e_{t-1}`.
pub fn arma_one_step(model: &ArimaModel, recent_y: &[f64], recent_eps: &[f64]) -> Result<f64> {
    let (p, q) = (model.order.p, model.order.q);
    if recent_y.len() < p {
        return Err(ArimaError::InsufficientHistory { needed: p, have: recent_y.len() });
    }
    if recent_eps.len() < q {
        return Err(ArimaError::InsufficientHistory { needed: q, have: recent_eps.len() });
    }
    Ok(point_forecast(model.c, &model.phi, &model.theta, recent_y, recent_eps))
}

fn mean_css(params: &[f64], p: usize, q: usize, w: &[f64]) -> f64 {
    let eps = recursion(params[0], &params[1..1 + p], &params[1 + p..1 + p + q], w).1;
    let n = (w.len() - p) as f64;
    let s: f64 = eps[p..].iter().map(|e| e * e).sum::<f64>() / n;
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Least squares of `w_t` on `[1, w_{t-1}, ..., w_{t-p}]`; returns `[c, phi...]`.
fn ols_ar_start(w: &[f64], p: usize) -> Vec<f64> {
    let k = p + 1;
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for t in p..w.len() {
        row[0] = 1.0;
        for i in 0..p {
            row[i + 1] = w[t - 1 - i];
        }
        for a in 0..k {
            xty[a] += row[a] * w[t];
            for b in 0..k {
                xtx[a * k + b] += row[a] * row[b];
            }
        }
    }
    solve_symmetric(&mut xtx, &mut xty, k).unwrap_or_else(|| {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let mut v = vec![0.0; k];
        v[0] = mean;
        v
    })
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_symmetric(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            for j in col..n {
                a[r * n + j] -= factor * a[col * n + j];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r * n + j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub optimizer: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optimizer: NelderMeadOptions::default() }
    }
}

pub fn fit(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    fit_with(series, order, &FitOptions::default())
}

/// Minimizes the conditional sum of squares of the d-differenced series.
/// Starts from OLS-on-lags for `c` and `phi`, zeros for `theta`.
pub fn fit_with(series: &[f64], order: ArimaOrder, opts: &FitOptions) -> Result<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ArimaError::NonFinite);
    }
    let w = difference(series, d)?.values;
    let needed = p + q + 10;
    if w.len() <= needed {
        return Err(ArimaError::SeriesTooShort { needed: needed + d, have: series.len() });
    }
    let mut x0 = ols_ar_start(&w, p);
    x0.extend(std::iter::repeat_n(0.0, q));

    let result = minimize(|x| mean_css(x, p, q, &w), &x0, &opts.optimizer);
    if !result.converged {
        return Err(ArimaError::NonConvergence(result.iterations));
    }
    if !result.fx.is_finite() {
        return Err(ArimaError::NonFinite);
    }
    let x = result.x;
    let model = ArimaModel {
        order,
        c: x[0],
        phi: x[1..1 + p].to_vec(),
        theta: x[1 + p..].to_vec(),
        residuals: recursion(x[0], &x[1..1 + p], &x[1 + p..], &w).1,
        mu: w.iter().sum::<f64>() / w.len() as f64,
        iterations: result.iterations,
    };
    if !model.is_stationary() {
        log::warn!("{order} fit is not stationary: phi = {:?}", model.phi);
    }
    if !model.is_invertible() {
        log::warn!("{order} fit is not invertible: theta = {:?}", model.theta);
    }
    Ok(model)
}

/// Walk-forward one-step predictions for `full[start..]` in the units of `full`.
/// Each prediction for index `t` uses only the true observations `full[..t]`.
pub fn forecast_from(model: &ArimaModel, full: &[f64], start: usize) -> Result<Vec<f64>> {
    let d = model.order.d;
    if start < d || start > full.len() {
        return Err(ArimaError::InsufficientHistory { needed: d, have: start });
    }
    let w = difference(full, d)?.values;
    let wpred = model.predict_differenced(&w);
    let weights = integration_weights(d);
    Ok((start..full.len())
        .map(|t| {
            let mut y = wpred[t - d];
            for (k, a) in weights.iter().enumerate() {
                y += a * full[t - 1 - k];
            }
            y
        })
        .collect())
}

/// Recursive multi-step forecasts beyond the end of `history`, with future innovations zero.
pub fn forecast_ahead(model: &ArimaModel, history: &[f64], steps: usize) -> Result<Vec<f64>> {
    let d = model.order.d;
    let (p, q) = (model.order.p, model.order.q);
    if history.len() <= d {
        return Err(ArimaError::InsufficientHistory { needed: d + 1, have: history.len() });
    }
    let mut w = difference(history, d)?.values;
    let mut eps = model.innovations(&w);
    let mut levels = history.to_vec();
    let weights = integration_weights(d);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = w.len();
        let recent_y: Vec<f64> = (0..p).map(|i| if t > i { w[t - 1 - i] } else { 0.0 }).collect();
        let recent_e: Vec<f64> = (0..q).map(|j| if t > j { eps[t - 1 - j] } else { 0.0 }).collect();
        let wnext = arma_one_step(model, &recent_y, &recent_e)?;
        let n = levels.len();
        let mut y = wnext;
        for (k, a) in weights.iter().enumerate() {
            y += a * levels[n - 1 - k];
        }
        w.push(wnext);
        eps.push(0.0);
        levels.push(y);
        out.push(y);
    }
    Ok(out)
}
