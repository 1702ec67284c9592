//! One interface over every model family: configuration, fitting on the
//! split/normalized pipeline, evaluation in original units, and persisted artifacts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arima::{self, ArimaError, ArimaModel, ArimaOrder};
use crate::data::{self, DataError, DatasetSplits, MinMaxParams, SplitSpec, TimeSeries};
use crate::metrics::{self, MetricsError};
use crate::nn::mlp::{Mlp, MlpConfig};
use crate::nn::{self, Network, NnError, TrainingTrace};
use crate::recurrent::{CellForm, CellKind, RnnConfig, RnnModel};
use crate::tcn::{Tcn, TcnConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Arima(#[from] ArimaError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("need at least {needed} history values, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
}

impl ModelError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::Arima(ArimaError::NonConvergence(_) | ArimaError::NonFinite)
                | Self::Nn(NnError::DivergenceDetected { .. })
                | Self::Metrics(MetricsError::NonFinite(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Arima,
    Mlp,
    Lstm,
    Gru,
    Tcn,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Arima, Family::Mlp, Family::Lstm, Family::Gru, Family::Tcn];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Arima => "arima",
            Self::Mlp => "mlp",
            Self::Lstm => "lstm",
            Self::Gru => "gru",
            Self::Tcn => "tcn",
        }
    }

    pub fn is_neural(self) -> bool {
        self != Self::Arima
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model family `{s}` (expected arima, mlp, lstm, gru or tcn)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArimaConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaConfig {
    fn default() -> Self {
        Self { p: 2, d: 1, q: 2 }
    }
}

impl ArimaConfig {
    pub fn order(&self) -> Result<ArimaOrder> {
        Ok(ArimaOrder::new(self.p, self.d, self.q)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    Arima(ArimaConfig),
    Mlp(MlpConfig),
    Lstm(RnnConfig),
    Gru(RnnConfig),
    Tcn(TcnConfig),
}

impl ModelConfig {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Arima => Self::Arima(ArimaConfig::default()),
            Family::Mlp => Self::Mlp(MlpConfig::default()),
            Family::Lstm => Self::Lstm(RnnConfig::default()),
            Family::Gru => Self::Gru(RnnConfig::default()),
            Family::Tcn => Self::Tcn(TcnConfig::default()),
        }
    }

    /// Family defaults with the top-level keys of `overrides` replaced.
    /// A `family` key in `overrides`, if present, must agree with `family`.
    pub fn from_overrides(family: Family, overrides: &Value) -> Result<Self> {
        let Value::Object(map) = overrides else {
            return Err(ModelError::Config("configuration must be an object".into()));
        };
        let mut merged = serde_json::to_value(Self::default_for(family)).expect("config serializes");
        let target = merged.as_object_mut().expect("config is an object");
        for (k, v) in map {
            if k == "family" && v.as_str() != Some(family.as_str()) {
                return Err(ModelError::Config(format!("config is for `{v}`, not `{family}`")));
            }
            target.insert(k.clone(), v.clone());
        }
        let config: Self = serde_json::from_value(merged).map_err(|e| ModelError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses JSON5 (unquoted keys allowed) overrides, e.g. `{p:2,d:1,q:2}`.
    pub fn parse(family: Family, text: &str) -> Result<Self> {
        let value: Value = json5::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        Self::from_overrides(family, &value)
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Arima(_) => Family::Arima,
            Self::Mlp(_) => Family::Mlp,
            Self::Lstm(_) => Family::Lstm,
            Self::Gru(_) => Family::Gru,
            Self::Tcn(_) => Family::Tcn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Arima(c) => c.order().map(|_| ()),
            Self::Mlp(c) => Ok(c.validate()?),
            Self::Lstm(c) | Self::Gru(c) => Ok(c.validate()?),
            Self::Tcn(c) => Ok(c.validate()?),
        }
    }

    /// Window length for neural families.
    pub fn lag(&self) -> Option<usize> {
        match self {
            Self::Arima(_) => None,
            Self::Mlp(c) => Some(c.lag),
            Self::Lstm(c) | Self::Gru(c) => Some(c.lag),
            Self::Tcn(c) => Some(c.lag),
        }
    }

    /// Hidden depth: dense or recurrent layers, or TCN stacks.
    pub fn layers(&self) -> Option<usize> {
        match self {
            Self::Arima(_) => None,
            Self::Mlp(c) => Some(c.layer_sizes.len()),
            Self::Lstm(c) | Self::Gru(c) => Some(c.hidden_sizes.len()),
            Self::Tcn(c) => Some(c.stacks),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Arima(_) => None,
            Self::Mlp(c) => Some(c.seed),
            Self::Lstm(c) | Self::Gru(c) => Some(c.seed),
            Self::Tcn(c) => Some(c.seed),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::Arima(_) => {}
            Self::Mlp(c) => c.seed = seed,
            Self::Lstm(c) | Self::Gru(c) => c.seed = seed,
            Self::Tcn(c) => c.seed = seed,
        }
    }

    pub fn set_epochs(&mut self, epochs: usize) {
        match self {
            Self::Arima(_) => {}
            Self::Mlp(c) => c.epochs = epochs,
            Self::Lstm(c) | Self::Gru(c) => c.epochs = epochs,
            Self::Tcn(c) => c.epochs = epochs,
        }
    }

    pub fn set_cell_form(&mut self, form: CellForm) {
        if let Self::Lstm(c) | Self::Gru(c) = self {
            c.form = form;
        }
    }

    pub fn canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("config serializes"))
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn label(&self) -> String {
        match self {
            Self::Arima(c) => format!("ARIMA({},{},{})", c.p, c.d, c.q),
            other => format!("{} {}", other.family(), other.canonical_json()),
        }
    }
}

/// Compact JSON with object keys sorted.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's default map is ordered by key, so a round trip through Value sorts
    let sorted: Value = serde_json::from_str(&value.to_string()).expect("valid json");
    sorted.to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedModel {
    Arima(ArimaModel),
    Mlp(Mlp),
    Lstm(RnnModel),
    Gru(RnnModel),
    Tcn(Tcn),
}

impl FittedModel {
    fn network_predict(&self, window: &[f64]) -> Option<nn::Result<f64>> {
        match self {
            Self::Arima(_) => None,
            Self::Mlp(m) => Some(m.predict(window)),
            Self::Lstm(m) | Self::Gru(m) => Some(m.predict(window)),
            Self::Tcn(m) => Some(m.predict(window)),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Self::Arima(m) => 1 + m.phi.len() + m.theta.len(),
            Self::Mlp(m) => m.num_params(),
            Self::Lstm(m) | Self::Gru(m) => m.num_params(),
            Self::Tcn(m) => m.num_params(),
        }
    }
}

/// A fitted model together with everything needed to apply it to raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedForecaster {
    pub format_version: u32,
    pub config: ModelConfig,
    pub config_digest: String,
    pub scaler: MinMaxParams,
    pub model: FittedModel,
}

impl TrainedForecaster {
    pub fn new(config: ModelConfig, scaler: MinMaxParams, model: FittedModel) -> Self {
        let config_digest = config.digest();
        Self { format_version: FORMAT_VERSION, config, config_digest, scaler, model }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forecaster serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if f.format_version != FORMAT_VERSION {
            return Err(ModelError::FormatVersion(f.format_version));
        }
        if f.config.family() != family_of(&f.model) {
            return Err(ModelError::Malformed("config and model families differ".into()));
        }
        if f.config.digest() != f.config_digest {
            return Err(ModelError::Malformed("config digest does not match config".into()));
        }
        f.scaler.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| io_error(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text)
    }

    pub fn family(&self) -> Family {
        self.config.family()
    }

    /// `steps` recursive one-step forecasts past the end of `history` (original units);
    /// each forecast is fed back as the newest input.
    pub fn forecast_ahead(&self, history: &[f64], steps: usize) -> Result<Vec<f64>> {
        if let Some(pos) = history.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(pos).into());
        }
        let scaled: Vec<f64> = history.iter().map(|&v| self.scaler.scale(v)).collect();
        let out = match &self.model {
            FittedModel::Arima(m) => {
                let needed = m.order.d + 1;
                if scaled.len() < needed {
                    return Err(ModelError::InsufficientHistory { needed, have: scaled.len() });
                }
                arima::forecast_ahead(m, &scaled, steps)?
            }
            net => {
                let lag = self.config.lag().expect("neural config has a lag");
                if scaled.len() < lag {
                    return Err(ModelError::InsufficientHistory { needed: lag, have: scaled.len() });
                }
                let mut buf = scaled[scaled.len() - lag..].to_vec();
                let mut out = Vec::with_capacity(steps);
                for _ in 0..steps {
                    let y = net.network_predict(&buf).expect("neural model")?;
                    out.push(y);
                    buf.remove(0);
                    buf.push(y);
                }
                out
            }
        };
        Ok(out.into_iter().map(|v| self.scaler.unscale(v)).collect())
    }
}

fn family_of(model: &FittedModel) -> Family {
    match model {
        FittedModel::Arima(_) => Family::Arima,
        FittedModel::Mlp(_) => Family::Mlp,
        FittedModel::Lstm(_) => Family::Lstm,
        FittedModel::Gru(_) => Family::Gru,
        FittedModel::Tcn(_) => Family::Tcn,
    }
}

fn io_error(path: &Path, e: std::io::Error) -> ModelError {
    ModelError::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// Raw series, its chronological splits, and the train-fitted scaler.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub splits: DatasetSplits,
    pub scaler: MinMaxParams,
}

impl Prepared {
    pub fn new(series: &TimeSeries, spec: &SplitSpec) -> Result<Self> {
        let splits = data::split(series, spec)?;
        let scaler = data::fit_minmax(&splits.train)?;
        let normalized = data::transform(series, &scaler)?.values().to_vec();
        Ok(Self { raw: series.values().to_vec(), normalized, splits, scaler })
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        self.splits.sizes()
    }

    /// Global `[start, end)` of a split.
    pub fn bounds(&self, split: Split) -> (usize, usize) {
        let (tr, va, te) = self.sizes();
        match split {
            Split::Train => (0, tr),
            Split::Val => (tr, tr + va),
            Split::Test => (tr + va, tr + va + te),
        }
    }

    fn normalized_split(&self, split: Split) -> &[f64] {
        let (a, b) = self.bounds(split);
        &self.normalized[a..b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub forecaster: TrainedForecaster,
    pub trace: Option<TrainingTrace>,
    pub train_seconds: f64,
}

/// Fits on the normalized training split; neural families also track validation loss.
pub fn fit(config: &ModelConfig, prepared: &Prepared) -> Result<FitOutcome> {
    config.validate()?;
    let started = Instant::now();
    let train = prepared.normalized_split(Split::Train);
    let val = prepared.normalized_split(Split::Val);
    let windows = |lag: usize| -> Result<_> {
        Ok((data::window_values(train, lag)?, data::window_values(val, lag)?))
    };
    let (model, trace) = match config {
        ModelConfig::Arima(c) => (FittedModel::Arima(arima::fit(train, c.order()?)?), None),
        ModelConfig::Mlp(c) => {
            let (tr, va) = windows(c.lag)?;
            let (net, trace) = nn::train(Mlp::new(c)?, &tr, &va, &c.train_options())?;
            (FittedModel::Mlp(net), Some(trace))
        }
        ModelConfig::Lstm(c) | ModelConfig::Gru(c) => {
            let kind = if config.family() == Family::Lstm { CellKind::Lstm } else { CellKind::Gru };
            let (tr, va) = windows(c.lag)?;
            let (net, trace) = nn::train(RnnModel::new(kind, c)?, &tr, &va, &c.train_options())?;
            let model = match kind {
                CellKind::Lstm => FittedModel::Lstm(net),
                CellKind::Gru => FittedModel::Gru(net),
            };
            (model, Some(trace))
        }
        ModelConfig::Tcn(c) => {
            let (tr, va) = windows(c.lag)?;
            let (net, trace) = nn::train(Tcn::new(c)?, &tr, &va, &c.train_options())?;
            (FittedModel::Tcn(net), Some(trace))
        }
    };
    Ok(FitOutcome {
        forecaster: TrainedForecaster::new(config.clone(), prepared.scaler, model),
        trace,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One-step predictions over one split, in original units, with the persistence
/// forecast for the same targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitForecast {
    /// Global index of the first predicted observation.
    pub first_index: usize,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub persistence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

impl SplitForecast {
    pub fn scores(&self) -> Result<Scores> {
        let r = metrics::evaluate(&self.observed, &self.predicted, 0.0, "", "")?;
        Ok(Scores { rmse: r.rmse, mae: r.mae, n: r.n })
    }

    pub fn persistence_scores(&self) -> Result<Scores> {
        let r = metrics::evaluate(&self.observed, &self.persistence, 0.0, "", "")?;
        Ok(Scores { rmse: r.rmse, mae: r.mae, n: r.n })
    }
}

/// Walk-forward over `split`: ARIMA conditions on every true value before each target;
/// neural models window the split on its own, so its first `lag` values are inputs only.
pub fn predict_split(forecaster: &TrainedForecaster, prepared: &Prepared, split: Split) -> Result<SplitForecast> {
    if forecaster.scaler != prepared.scaler {
        return Err(ModelError::Config("forecaster scaler differs from the prepared data".into()));
    }
    let (start, end) = prepared.bounds(split);
    let scaler = &forecaster.scaler;
    let (first_index, predicted_scaled) = match &forecaster.model {
        FittedModel::Arima(m) => {
            let first = start.max(m.order.d);
            (first, arima::forecast_from(m, &prepared.normalized[..end], first)?)
        }
        net => {
            let lag = forecaster.config.lag().expect("neural config has a lag");
            let windows = data::window_values(&prepared.normalized[start..end], lag)?;
            let preds: nn::Result<Vec<f64>> =
                windows.inputs().map(|w| net.network_predict(w).expect("neural model")).collect();
            (start + lag, preds?)
        }
    };
    let predicted: Vec<f64> = predicted_scaled.iter().map(|&v| scaler.unscale(v)).collect();
    if let Some(i) = predicted.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i).into());
    }
    let observed = prepared.raw[first_index..end].to_vec();
    let persistence = if first_index == 0 {
        return Err(ModelError::InsufficientHistory { needed: 1, have: 0 });
    } else {
        prepared.raw[first_index - 1..end - 1].to_vec()
    };
    Ok(SplitForecast { first_index, observed, predicted, persistence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::nn::set_flat_params;

    fn prepared(len: usize) -> Prepared {
        let s = generate_synthetic(&SyntheticSpec { length: len, ..Default::default() }).unwrap();
        Prepared::new(&s, &SplitSpec::default()).unwrap()
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let c = ModelConfig::parse(Family::Arima, "{p:1,d:1,q:0}").unwrap();
        assert_eq!(c, ModelConfig::Arima(ArimaConfig { p: 1, d: 1, q: 0 }));
        let c = ModelConfig::parse(Family::Tcn, "{filters: 16, dilations: [1,2,4]}").unwrap();
        let ModelConfig::Tcn(t) = c else { panic!() };
        assert_eq!((t.filters, t.kernel_size, t.dilations), (16, 4, vec![1, 2, 4]));
        assert!(ModelConfig::parse(Family::Mlp, "{bogus: 1}").is_err());
        assert!(ModelConfig::parse(Family::Mlp, "{family: 'tcn'}").is_err());
        assert!(ModelConfig::parse(Family::Arima, "{p:0,d:0,q:0}").is_err());
        assert!(ModelConfig::parse(Family::Lstm, "{form: 'literal'}").is_ok());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = ModelConfig::default_for(Family::Tcn);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.set_seed(43);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn random_walk_arima_is_persistence() {
        let p = prepared(300);
        let model = ArimaModel::with_coefficients(ArimaOrder::new(0, 1, 0).unwrap(), 0.0, vec![], vec![]).unwrap();
        let config = ModelConfig::Arima(ArimaConfig { p: 0, d: 1, q: 0 });
        let f = TrainedForecaster::new(config, p.scaler, FittedModel::Arima(model));
        let sf = predict_split(&f, &p, Split::Test).unwrap();
        for (a, b) in sf.predicted.iter().zip(&sf.persistence) {
            assert!((a - b).abs() < 1e-9);
        }
        let ahead = f.forecast_ahead(&p.raw, 3).unwrap();
        let last = *p.raw.last().unwrap();
        for v in ahead {
            assert!((v - last).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mlp_forecasts_train_min() {
        let p = prepared(200);
        let config = MlpConfig::default();
        let mut net = Mlp::new(&config).unwrap();
        let n = net.num_params();
        set_flat_params(&mut net, &vec![0.0; n]);
        let f = TrainedForecaster::new(ModelConfig::Mlp(config), p.scaler, FittedModel::Mlp(net));
        assert_eq!(f.forecast_ahead(&p.raw, 4).unwrap(), vec![p.scaler.min; 4]);
        assert!(matches!(
            f.forecast_ahead(&p.raw[..1], 1),
            Err(ModelError::InsufficientHistory { needed: 2, have: 1 })
        ));
    }

    #[test]
    fn neural_split_starts_after_lag() {
        let p = prepared(200);
        let config = ModelConfig::parse(Family::Mlp, "{epochs: 2, lag: 3}").unwrap();
        let out = fit(&config, &p).unwrap();
        let sf = predict_split(&out.forecaster, &p, Split::Val).unwrap();
        let (start, end) = p.bounds(Split::Val);
        assert_eq!(sf.first_index, start + 3);
        assert_eq!(sf.observed.len(), end - start - 3);
        assert_eq!(out.trace.unwrap().train_loss_per_epoch.len(), 2);
    }

    #[test]
    fn artifact_roundtrip_is_exact() {
        let p = prepared(200);
        for family in Family::ALL {
            let mut config = ModelConfig::default_for(family);
            config.set_epochs(1);
            if let ModelConfig::Tcn(c) = &mut config {
                c.filters = 4;
            }
            let out = fit(&config, &p).unwrap();
            let json = out.forecaster.to_json();
            let back = TrainedForecaster::from_json(&json).unwrap();
            assert_eq!(back, out.forecaster, "{family}");
            assert_eq!(back.to_json(), json);
        }
    }

    #[test]
    fn tampered_artifact_is_rejected() {
        let p = prepared(200);
        let mut config = ModelConfig::default_for(Family::Mlp);
        config.set_epochs(1);
        let json = fit(&config, &p).unwrap().forecaster.to_json();
        let tampered = json.replacen("\"seed\": 42", "\"seed\": 41", 1);
        assert!(matches!(TrainedForecaster::from_json(&tampered), Err(ModelError::Malformed(_))));
        let versioned = json.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(matches!(TrainedForecaster::from_json(&versioned), Err(ModelError::FormatVersion(9))));
    }
}
