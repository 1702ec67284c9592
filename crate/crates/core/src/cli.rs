//! Command-line front end. Exit codes: 0 ok, 2 usage or configuration, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::data::{self, SplitSpec, SyntheticSpec, TimeSeries};
use crate::model::{self, canonical_json, sha256_hex, Family, FittedModel, ModelConfig, ModelError, Prepared, Split};
use crate::recurrent::CellForm;
use crate::report::{
    ArimaDiagnostics, DataSource, ForecastBlock, Manifest, Report, SplitMetrics, SplitSizes,
};
use crate::tuning::{self, GridSpec, RunOptions, TuningError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const SEED_ENV: &str = "TSFORECAST_SEED";

#[derive(Debug, Parser)]
#[command(name = "tsforecast", version, about = "Univariate time-series forecasting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic seasonal series as `week,height` CSV.
    Generate(GenerateArgs),
    /// Fit one model and report validation and test metrics.
    Train(TrainArgs),
    /// Fit every configuration of a grid and select on validation RMSE.
    Gridsearch(GridArgs),
    /// Recursive multi-step forecasts from a saved model.
    Forecast(ForecastArgs),
    /// Extract per-epoch train/validation loss from a report as CSV.
    Losscurves(LossArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1757, value_parser = clap::value_parser!(u64).range(50..))]
    pub length: u64,
    #[arg(long, default_value_t = 52.0)]
    pub period: f64,
    #[arg(long, default_value_t = 40.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 50.0)]
    pub level: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub trend: f64,
    #[arg(long, default_value_t = 5.0)]
    pub noise: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 7)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, required_unless_present = "replay")]
    pub model: Option<Family>,
    #[arg(long, required_unless_present = "replay")]
    pub data: Option<PathBuf>,
    /// JSON5 overrides of the family defaults, e.g. `{p:2,d:1,q:2}`; `@file` reads a file.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// LSTM/GRU gates in the printed form (subtracted biases, tanh of the candidate).
    #[arg(long, visible_alias = "paper-literal")]
    pub literal_gates: bool,
    /// Re-run the training recorded in a report's manifest.
    #[arg(long, conflicts_with_all = ["model", "data", "config", "seed", "literal_gates"])]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: Family,
    /// `paper`, `arima64`, or a JSON5 grid file.
    #[arg(long, default_value = "paper")]
    pub grid: String,
    #[arg(long, required_unless_present = "dry_run")]
    pub data: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    /// Replace every configuration's epoch count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// List the configurations without fitting.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        if e.is_numerical() {
            Self::Numerical(e.to_string())
        } else {
            Self::Usage(e.to_string())
        }
    }
}

impl From<TuningError> for CliError {
    fn from(e: TuningError) -> Self {
        match e {
            TuningError::AllRunsFailed(_) => Self::Numerical(e.to_string()),
            TuningError::Model(m) => m.into(),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<crate::report::ReportError> for CliError {
    fn from(e: crate::report::ReportError) -> Self {
        Self::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Forecast(a) => forecast(a),
        Command::Losscurves(a) => losscurves(a),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Usage(format!("stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        length: a.length as usize,
        period: a.period,
        amplitude: a.amplitude,
        level: a.level,
        trend: a.trend,
        noise: a.noise,
        seed: a.seed,
    };
    let series = data::generate_synthetic(&spec)?;
    write_output(a.out.as_deref(), &data::to_csv(&series))
}

/// Reads and parses a CSV, returning the series and a descriptor with the content hash.
pub fn load_data(path: &Path) -> CliResult<(TimeSeries, DataSource)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
    let series =
        data::parse_csv(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let source = DataSource { path: path.display().to_string(), sha256: sha256_hex(&bytes), rows: series.len() };
    Ok((series, source))
}

fn config_text(raw: Option<&str>) -> CliResult<String> {
    match raw {
        None => Ok("{}".into()),
        Some(s) => match s.strip_prefix('@') {
            Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{path}: {e}"))),
            None => Ok(s.to_owned()),
        },
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let started_at = now();
    let (config, data_path, expected_sha) = match &a.replay {
        Some(path) => {
            let old = Report::load(path)?;
            if old.manifest.command != "train" {
                return Err(CliError::Usage(format!("{}: not a train report", path.display())));
            }
            let config = old
                .manifest
                .config
                .ok_or_else(|| CliError::Usage(format!("{}: manifest has no config", path.display())))?;
            (config, PathBuf::from(&old.manifest.data.path), Some(old.manifest.data.sha256))
        }
        None => {
            let family = a.model.expect("required by clap");
            let mut config = ModelConfig::parse(family, &config_text(a.config.as_deref())?)?;
            if a.literal_gates {
                if !matches!(family, Family::Lstm | Family::Gru) {
                    return Err(CliError::Usage("--literal-gates applies to lstm and gru only".into()));
                }
                config.set_cell_form(CellForm::Literal);
            }
            if let Some(seed) = a.seed {
                config.set_seed(seed);
            }
            (config, a.data.clone().expect("required by clap"), None)
        }
    };
    let (series, source) = load_data(&data_path)?;
    if let Some(sha) = expected_sha {
        if sha != source.sha256 {
            return Err(CliError::Usage(format!("{}: content differs from the recorded data", data_path.display())));
        }
    }
    let split = SplitSpec::default();
    let prepared = Prepared::new(&series, &split)?;
    let outcome = model::fit(&config, &prepared)?;
    let val = model::predict_split(&outcome.forecaster, &prepared, Split::Val)?;
    let test = model::predict_split(&outcome.forecaster, &prepared, Split::Test)?;

    let mut report = Report::new(Manifest {
        command: "train".into(),
        data: source,
        seed: config.seed(),
        split,
        digest: config.digest(),
        config: Some(config.clone()),
        grid: None,
        epochs_override: None,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: String::new(),
    });
    report.splits = Some(SplitSizes::from(prepared.sizes()));
    report.scaler = Some(prepared.scaler);
    report.metrics = Some(SplitMetrics { val: val.scores()?, test: test.scores()? });
    report.persistence = Some(SplitMetrics { val: val.persistence_scores()?, test: test.persistence_scores()? });
    report.runtime_seconds = outcome.train_seconds;
    report.loss_curves = outcome.trace.clone();
    if let FittedModel::Arima(m) = &outcome.forecaster.model {
        report.arima = Some(ArimaDiagnostics::from_model(m));
    }
    report.manifest.finished_at = now();

    if let Some(path) = &a.out_model {
        outcome.forecaster.save(path)?;
    }
    if let Some(path) = &a.report {
        report.save(path)?;
    }
    let m = report.metrics.expect("set above");
    let pers = report.persistence.expect("set above");
    println!(
        "{}: val rmse {:.4} mae {:.4} | test rmse {:.4} mae {:.4} | persistence test rmse {:.4} | {:.2}s",
        config.label(),
        m.val.rmse,
        m.val.mae,
        m.test.rmse,
        m.test.mae,
        pers.test.rmse,
        report.runtime_seconds
    );
    Ok(())
}

fn resolve_grid(family: Family, name: &str) -> CliResult<GridSpec> {
    let grid = match name {
        "paper" => GridSpec::published(family),
        "arima64" => GridSpec::arima64(),
        path => GridSpec::load(path)?,
    };
    if grid.family != family {
        return Err(CliError::Usage(format!("grid `{name}` is for {}, not {family}", grid.family)));
    }
    Ok(grid)
}

fn gridsearch(a: GridArgs) -> CliResult<()> {
    let started_at = now();
    let grid = resolve_grid(a.model, &a.grid)?;
    let opts = RunOptions { seed: a.seed, workers: a.workers as usize, epochs: a.epochs.map(|e| e as usize) };
    if a.dry_run {
        let configs = tuning::prepare_configs(&grid, &opts)?;
        let mut out = format!("{} configurations\n", configs.len());
        for (i, c) in configs.iter().enumerate() {
            out.push_str(&format!("{i}\t{}\n", c.canonical_json()));
        }
        for note in &grid.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        return write_output(None, &out);
    }
    let data_path = a.data.clone().expect("required by clap");
    let (series, source) = load_data(&data_path)?;
    let split = SplitSpec::default();
    let prepared = Prepared::new(&series, &split)?;
    let timer = Instant::now();
    let outcome = tuning::run_grid(&grid, &prepared, &opts)?;
    let result = outcome.result;

    let grid_json = serde_json::to_value(&grid).expect("grid serializes");
    let digest_input = serde_json::json!({"grid": grid_json, "seed": a.seed, "epochs": a.epochs});
    let mut report = Report::new(Manifest {
        command: "gridsearch".into(),
        data: source,
        seed: a.seed,
        split,
        config: None,
        grid: Some(grid),
        epochs_override: opts.epochs,
        digest: sha256_hex(canonical_json(&digest_input).as_bytes()),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: String::new(),
    });
    report.splits = Some(SplitSizes::from(prepared.sizes()));
    report.scaler = Some(prepared.scaler);
    report.metrics = Some(SplitMetrics { val: result.best.val, test: result.best.test });
    let best_val = model::predict_split(&outcome.best_model, &prepared, Split::Val)?;
    report.persistence =
        Some(SplitMetrics { val: best_val.persistence_scores()?, test: result.best.test_persistence });
    report.loss_curves = outcome.best_trace;
    if let FittedModel::Arima(m) = &outcome.best_model.model {
        report.arima = Some(ArimaDiagnostics::from_model(m));
    }
    report.notes = result.notes.clone();
    report.runtime_seconds = timer.elapsed().as_secs_f64();
    println!(
        "{} runs ({} failed); best #{} {}: val rmse {:.4} | test rmse {:.4} mae {:.4}",
        result.total_runs,
        result.failed_runs,
        result.best.index,
        result.best.label,
        result.best.val.rmse,
        result.best.test.rmse,
        result.best.test.mae
    );
    report.grid = Some(result);
    report.manifest.finished_at = now();
    if let Some(path) = &a.out_model {
        outcome.best_model.save(path)?;
    }
    if let Some(path) = &a.report {
        report.save(path)?;
    }
    Ok(())
}

fn forecast(a: ForecastArgs) -> CliResult<()> {
    let started_at = now();
    let forecaster = model::TrainedForecaster::load(&a.model_file)?;
    let (series, source) = load_data(&a.data)?;
    let timer = Instant::now();
    let values = forecaster.forecast_ahead(series.values(), a.steps)?;
    let mut out = String::new();
    for v in &values {
        out.push_str(&format!("{v}\n"));
    }
    write_output(None, &out)?;
    if let Some(path) = &a.report {
        let mut report = Report::new(Manifest {
            command: "forecast".into(),
            data: source,
            seed: forecaster.config.seed(),
            split: SplitSpec::default(),
            digest: forecaster.config_digest.clone(),
            config: Some(forecaster.config.clone()),
            grid: None,
            epochs_override: None,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            started_at,
            finished_at: now(),
        });
        report.scaler = Some(forecaster.scaler);
        report.runtime_seconds = timer.elapsed().as_secs_f64();
        report.forecast = Some(ForecastBlock {
            model_file: a.model_file.display().to_string(),
            history_len: series.len(),
            steps: a.steps,
            values,
        });
        report.save(path)?;
    }
    Ok(())
}

fn losscurves(a: LossArgs) -> CliResult<()> {
    let report = Report::load(&a.report)?;
    let trace = report.loss_curves.ok_or_else(|| {
        CliError::Usage(format!("{}: report has no loss curves (ARIMA is not trained by epochs)", a.report.display()))
    })?;
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in trace.train_loss_per_epoch.iter().zip(&trace.val_loss_per_epoch).enumerate() {
        out.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    write_output(a.out.as_deref(), &out)
}
