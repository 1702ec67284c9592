//! Versioned JSON run reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arima::ArimaModel;
use crate::data::{MinMaxParams, SplitSpec};
use crate::model::{ModelConfig, Scores};
use crate::nn::TrainingTrace;
use crate::tuning::{GridSearchResult, GridSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub data: DataSource,
    pub seed: Option<u64>,
    pub split: SplitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_override: Option<usize>,
    /// Hash of the canonical config, or of the canonical grid.
    pub digest: String,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl From<(usize, usize, usize)> for SplitSizes {
    fn from((train, val, test): (usize, usize, usize)) -> Self {
        Self { train, val, test }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub val: Scores,
    pub test: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaDiagnostics {
    pub order: String,
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
    pub stationary: bool,
    pub invertible: bool,
    pub residual_mean: f64,
    pub residual_std: f64,
    /// Residual autocorrelation at lags 1..=acf.len().
    pub residual_acf: Vec<f64>,
    pub ljung_box_q: f64,
    pub ljung_box_lags: usize,
}

impl ArimaDiagnostics {
    pub fn from_model(m: &ArimaModel) -> Self {
        let r = &m.residuals;
        let n = r.len().max(1) as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        let lags = 10.min(r.len() / 5);
        let acf: Vec<f64> = (1..=lags)
            .map(|k| {
                if var == 0.0 {
                    return 0.0;
                }
                let cov: f64 = (k..r.len()).map(|t| (r[t] - mean) * (r[t - k] - mean)).sum::<f64>() / n;
                cov / var
            })
            .collect();
        let q = n * (n + 2.0) * acf.iter().enumerate().map(|(i, a)| a * a / (n - (i + 1) as f64)).sum::<f64>();
        Self {
            order: m.order.to_string(),
            c: m.c,
            phi: m.phi.clone(),
            theta: m.theta.clone(),
            mu: m.mu,
            iterations: m.iterations,
            stationary: m.is_stationary(),
            invertible: m.is_invertible(),
            residual_mean: mean,
            residual_std: var.sqrt(),
            residual_acf: acf,
            ljung_box_q: q,
            ljung_box_lags: lags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBlock {
    pub model_file: String,
    pub history_len: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub manifest: Manifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitSizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<MinMaxParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SplitMetrics>,
    /// Previous-value forecast scored on the same targets as `metrics`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistence: Option<SplitMetrics>,
    pub runtime_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_curves: Option<TrainingTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arima: Option<ArimaDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSearchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: not a report: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: unsupported schema version {version}")]
    Schema { path: String, version: u32 },
}

impl Report {
    pub fn new(manifest: Manifest) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            manifest,
            splits: None,
            scaler: None,
            metrics: None,
            persistence: None,
            runtime_seconds: 0.0,
            loss_curves: None,
            arima: None,
            grid: None,
            forecast: None,
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| ReportError::Io { path: path.display().to_string(), msg: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io { path: p.clone(), msg: e.to_string() })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ReportError::Parse { path: p.clone(), msg: e.to_string() })?;
        let version = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != SCHEMA_VERSION {
            return Err(ReportError::Schema { path: p, version });
        }
        serde_json::from_value(value).map_err(|e| ReportError::Parse { path: p, msg: e.to_string() })
    }

    /// A copy with wall-clock fields cleared, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.runtime_seconds = 0.0;
        r.manifest.started_at.clear();
        r.manifest.finished_at.clear();
        if let Some(g) = &mut r.grid {
            g.best.runtime_seconds = 0.0;
            for run in &mut g.runs {
                run.runtime_seconds = 0.0;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arima::ArimaOrder;

    #[test]
    fn white_noise_diagnostics() {
        let mut m = ArimaModel::with_coefficients(ArimaOrder::new(1, 0, 0).unwrap(), 0.0, vec![0.0], vec![]).unwrap();
        m.residuals = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let d = ArimaDiagnostics::from_model(&m);
        assert_eq!(d.residual_mean, 0.0);
        assert_eq!(d.residual_std, 1.0);
        assert_eq!(d.ljung_box_lags, 2);
        assert!((d.residual_acf[0] + 0.9).abs() < 1e-12);
        assert!((d.residual_acf[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn schema_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        std::fs::write(&path, r#"{"schema_version": 99}"#).unwrap();
        assert!(matches!(Report::load(&path), Err(ReportError::Schema { version: 99, .. })));
        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(Report::load(&path), Err(ReportError::Parse { .. })));
    }
}
