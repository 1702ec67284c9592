//! Grid search: enumerate configurations, fit each on the training split, score on
//! validation, pick the lowest finite validation RMSE and evaluate it on test.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{self, Family, ModelConfig, ModelError, Prepared, Scores, Split, TrainedForecaster};
use crate::nn::TrainingTrace;

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("all {0} grid runs failed")]
    AllRunsFailed(usize),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, TuningError>;

/// Candidate values for one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Vec<Value>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<Value>) -> Self {
        Self { name: name.to_owned(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub family: Family,
    /// Fixed overrides applied under every combination.
    #[serde(default)]
    pub base: Map<String, Value>,
    /// Enumerated in order, the last axis varying fastest.
    pub axes: Vec<Axis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Best configuration reported for the original study's dataset; kept for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_best: Option<Value>,
}

fn values<T: Serialize>(xs: &[T]) -> Vec<Value> {
    xs.iter().map(|x| serde_json::to_value(x).expect("serializable")).collect()
}

/// Hidden-layer architectures: depth 1 to 3, each layer 5 or 10 wide.
pub fn default_architectures() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for depth in 1..=3u32 {
        for code in 0..2usize.pow(depth) {
            out.push((0..depth).map(|i| if code >> (depth - 1 - i) & 1 == 0 { 5 } else { 10 }).collect());
        }
    }
    out
}

impl GridSpec {
    /// The published search space for `family`.
    pub fn published(family: Family) -> Self {
        match family {
            Family::Arima => Self {
                family,
                base: Map::new(),
                axes: vec![
                    Axis::new("p", values(&[1, 2, 4])),
                    Axis::new("d", values(&[1, 2, 3])),
                    Axis::new("q", values(&[1, 2, 4])),
                ],
                notes: vec![
                    "the stated value sets p in {1,2,4}, d in {1,2,3}, q in {1,2,4} enumerate 27 ARIMA(p,d,q) \
                     models; the published count of 64 does not follow from them (use --grid arima64 for a \
                     4x4x4 grid)"
                        .into(),
                ],
                reference_best: Some(json!({"p": 2, "d": 1, "q": 2})),
            },
            Family::Mlp | Family::Lstm | Family::Gru => {
                let key = if family == Family::Mlp { "layer_sizes" } else { "hidden_sizes" };
                let archs = default_architectures();
                let total = archs.len() * 2 * 3;
                Self {
                    family,
                    base: Map::new(),
                    axes: vec![
                        Axis::new(key, values(&archs)),
                        Axis::new("batch_size", values(&[32, 64])),
                        Axis::new("lag", values(&[2, 3, 4])),
                    ],
                    notes: vec![format!(
                        "default architecture grid: {} architectures (depth 1-3, widths 5 or 10) x 2 batch sizes \
                         x 3 lags = {total} configurations; the published count of 108 implies 18 architectures \
                         whose widths are not listed",
                        archs.len()
                    )],
                    reference_best: Some(match family {
                        Family::Mlp => json!({"layer_sizes": [10], "batch_size": 32, "lag": 2}),
                        _ => json!({"hidden_sizes": [10], "batch_size": 32, "lag": 3}),
                    }),
                }
            }
            Family::Tcn => Self {
                family,
                base: Map::new(),
                axes: vec![
                    Axis::new("stacks", values(&[1, 2, 3])),
                    Axis::new("filters", values(&[16, 32, 64])),
                    Axis::new("kernel_size", values(&[2, 3, 4])),
                    Axis::new("blocks", values(&[2, 3, 4])),
                    Axis::new("dilations", values(&[vec![1, 2, 4, 8, 16], vec![1, 3, 6, 12, 24]])),
                    Axis::new("lag", values(&[2, 3, 4])),
                ],
                notes: Vec::new(),
                reference_best: Some(json!({
                    "stacks": 1, "filters": 64, "kernel_size": 4, "blocks": 3,
                    "dilations": [1, 3, 6, 12, 24], "lag": 2
                })),
            },
        }
    }

    /// 4x4x4 ARIMA grid: p and q in 1..=4, d in 0..=3.
    pub fn arima64() -> Self {
        Self {
            family: Family::Arima,
            base: Map::new(),
            axes: vec![
                Axis::new("p", values(&[1, 2, 3, 4])),
                Axis::new("d", values(&[0, 1, 2, 3])),
                Axis::new("q", values(&[1, 2, 3, 4])),
            ],
            notes: vec!["4x4x4 grid offered as a 64-model alternative; not the stated value sets".into()],
            reference_best: None,
        }
    }

    /// A JSON5 grid file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TuningError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        json5::from_str(&text).map_err(|e| TuningError::Grid(format!("{}: {e}", path.display())))
    }

    pub fn cardinality(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(TuningError::Grid(format!("axis `{}` is empty", axis.name)));
            }
            if !names.insert(axis.name.as_str()) {
                return Err(TuningError::Grid(format!("axis `{}` appears twice", axis.name)));
            }
            if self.base.contains_key(&axis.name) {
                return Err(TuningError::Grid(format!("axis `{}` is also fixed in base", axis.name)));
            }
            let distinct: HashSet<String> = axis.values.iter().map(|v| v.to_string()).collect();
            if distinct.len() != axis.values.len() {
                return Err(TuningError::Grid(format!("axis `{}` repeats a value", axis.name)));
            }
        }
        Ok(())
    }
}

/// Cartesian product in lexicographic order of axis positions.
pub fn enumerate(grid: &GridSpec) -> Result<Vec<ModelConfig>> {
    grid.validate()?;
    let n = grid.cardinality();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; grid.axes.len()];
    for _ in 0..n {
        let mut overrides = grid.base.clone();
        for (axis, &i) in grid.axes.iter().zip(&idx) {
            overrides.insert(axis.name.clone(), axis.values[i].clone());
        }
        let config = ModelConfig::from_overrides(grid.family, &Value::Object(overrides))
            .map_err(|e| TuningError::Grid(format!("combination {}: {e}", out.len())))?;
        out.push(config);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < grid.axes[k].values.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged { message: String },
    NonConvergence { message: String },
    Failed { message: String },
}

impl RunStatus {
    fn from_error(e: &ModelError) -> Self {
        let message = e.to_string();
        match e {
            ModelError::Nn(crate::nn::NnError::DivergenceDetected { .. }) => Self::Diverged { message },
            e if e.is_numerical() => Self::NonConvergence { message },
            _ => Self::Failed { message },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub label: String,
    pub config: ModelConfig,
    pub config_digest: String,
    pub layers: Option<usize>,
    pub lag: Option<usize>,
    pub status: RunStatus,
    pub val: Option<Scores>,
    pub runtime_seconds: f64,
}

impl RunRecord {
    pub fn finite_val_rmse(&self) -> Option<f64> {
        self.val.map(|s| s.rmse).filter(|r| r.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateAxis {
    Layers,
    Lag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub value: usize,
    /// `None` when every run with this value failed.
    pub mean_val_rmse: Option<f64>,
    pub finite_runs: usize,
    pub failures: usize,
}

/// Mean validation RMSE over finite runs sharing each axis value.
pub fn aggregate_by(runs: &[RunRecord], axis: AggregateAxis) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
    for run in runs {
        let key = match axis {
            AggregateAxis::Layers => run.layers,
            AggregateAxis::Lag => run.lag,
        };
        let Some(key) = key else { continue };
        let entry = groups.entry(key).or_default();
        match run.finite_val_rmse() {
            Some(r) => {
                entry.0 += r;
                entry.1 += 1;
            }
            None => entry.2 += 1,
        }
    }
    groups
        .into_iter()
        .map(|(value, (sum, finite_runs, failures))| AggregateRow {
            value,
            mean_val_rmse: (finite_runs > 0).then(|| sum / finite_runs as f64),
            finite_runs,
            failures,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub by_layers: Vec<AggregateRow>,
    pub by_lag: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRun {
    pub index: usize,
    pub label: String,
    pub config: ModelConfig,
    pub val: Scores,
    pub test: Scores,
    pub test_persistence: Scores,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub family: Family,
    pub seed: Option<u64>,
    pub total_runs: usize,
    pub failed_runs: usize,
    pub runs: Vec<RunRecord>,
    pub best: BestRun,
    pub aggregates: Aggregates,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_best: Option<Value>,
}

/// The grid result plus the refitted winner.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub result: GridSearchResult,
    pub best_model: TrainedForecaster,
    pub best_trace: Option<TrainingTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Shared by every configuration.
    pub seed: Option<u64>,
    pub workers: usize,
    pub epochs: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: None, workers: 1, epochs: None }
    }
}

/// Enumerated configurations with the run-wide seed and epoch overrides applied.
pub fn prepare_configs(grid: &GridSpec, opts: &RunOptions) -> Result<Vec<ModelConfig>> {
    let mut configs = enumerate(grid)?;
    for c in &mut configs {
        if let Some(seed) = opts.seed {
            c.set_seed(seed);
        }
        if let Some(epochs) = opts.epochs {
            c.set_epochs(epochs);
        }
        c.validate()?;
    }
    Ok(configs)
}

fn run_one(index: usize, config: &ModelConfig, prepared: &Prepared) -> RunRecord {
    let started = Instant::now();
    let scored = model::fit(config, prepared)
        .and_then(|out| model::predict_split(&out.forecaster, prepared, Split::Val)?.scores());
    let (status, val) = match scored {
        Ok(s) if s.rmse.is_finite() => (RunStatus::Ok, Some(s)),
        Ok(s) => (RunStatus::NonConvergence { message: format!("validation rmse {}", s.rmse) }, None),
        Err(e) => (RunStatus::from_error(&e), None),
    };
    RunRecord {
        index,
        label: config.label(),
        config: config.clone(),
        config_digest: config.digest(),
        layers: config.layers(),
        lag: config.lag(),
        status,
        val,
        runtime_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs every configuration on a pool of at most `opts.workers` threads. Records come
/// back in enumeration order whatever the completion order.
pub fn run_grid(grid: &GridSpec, prepared: &Prepared, opts: &RunOptions) -> Result<GridOutcome> {
    let configs = prepare_configs(grid, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| TuningError::Grid(e.to_string()))?;
    let runs: Vec<RunRecord> =
        pool.install(|| configs.par_iter().enumerate().map(|(i, c)| run_one(i, c, prepared)).collect());

    let best_index = runs
        .iter()
        .filter_map(|r| r.finite_val_rmse().map(|v| (r.index, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(TuningError::AllRunsFailed(runs.len()))?;

    // identical seed and data, so the refit reproduces the scored run exactly
    let winner = &runs[best_index];
    let refit = model::fit(&winner.config, prepared)?;
    let test = model::predict_split(&refit.forecaster, prepared, Split::Test)?;
    let best = BestRun {
        index: best_index,
        label: winner.label.clone(),
        config: winner.config.clone(),
        val: winner.val.expect("winner has scores"),
        test: test.scores()?,
        test_persistence: test.persistence_scores()?,
        runtime_seconds: winner.runtime_seconds,
    };
    let aggregates = Aggregates {
        by_layers: aggregate_by(&runs, AggregateAxis::Layers),
        by_lag: aggregate_by(&runs, AggregateAxis::Lag),
    };
    let result = GridSearchResult {
        family: grid.family,
        seed: opts.seed,
        total_runs: runs.len(),
        failed_runs: runs.iter().filter(|r| r.finite_val_rmse().is_none()).count(),
        runs,
        best,
        aggregates,
        notes: grid.notes.clone(),
        reference_best: grid.reference_best.clone(),
    };
    Ok(GridOutcome { result, best_model: refit.forecaster, best_trace: refit.trace })
}
