//! Univariate time-series forecasting: ARIMA, MLP, LSTM, GRU and TCN models built from
//! scratch, with the split/normalize/window pipeline, metrics and a grid-search harness.

pub mod arima;
pub mod cli;
pub mod data;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod recurrent;
pub mod report;
pub mod tcn;
pub mod tuning;
