//! Series ingestion, chronological splitting, min-max scaling and windowing.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("series is empty")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("series too short: need {needed} values, have {have}")]
    SeriesTooShort { needed: usize, have: usize },
    #[error("split fractions must each lie in (0,1) and sum to 1, got {0:?}")]
    InvalidSplit([f64; 3]),
    #[error("degenerate range: min = max = {0}")]
    DegenerateRange(f64),
    #[error("invalid min-max parameters: min {min} must be below max {max}")]
    InvalidParams { min: f64, max: f64 },
    #[error("lag must be at least 1")]
    ZeroLag,
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("week indices are not strictly increasing at row {0}")]
    NonMonotonicTimestamps(usize),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
    #[error("{inputs} inputs do not form {targets} rows of width {lag}")]
    ShapeMismatch { inputs: usize, targets: usize, lag: usize },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Ordered, finite, non-empty observations indexed by week ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    start_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<i64>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, start_index: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(DataError::Empty);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(pos));
        }
        Ok(Self { values, start_index, timestamps: None })
    }

    /// Builds a series carrying explicit week indices, which must be strictly increasing.
    pub fn with_timestamps(values: Vec<f64>, timestamps: Vec<i64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(DataError::Parse {
                row: timestamps.len().min(values.len()) + 1,
                msg: "timestamp count differs from value count".into(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DataError::NonMonotonicTimestamps(i + 2));
        }
        let start = timestamps.first().copied().unwrap_or(0);
        let mut s = Self::new(values, start)?;
        s.timestamps = Some(timestamps);
        Ok(s)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    /// Contiguous sub-series `[from, to)`; timestamps follow along.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        let values = self.values[from..to].to_vec();
        match &self.timestamps {
            Some(ts) => Self::with_timestamps(values, ts[from..to].to_vec()),
            None => Self::new(values, self.start_index + from as i64),
        }
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let mut out = Self::new(values, self.start_index)?;
        out.timestamps = self.timestamps.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, val_fraction: f64, test_fraction: f64) -> Result<Self> {
        let spec = Self { train_fraction, val_fraction, test_fraction };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        let in_range = f.iter().all(|x| *x > 0.0 && *x < 1.0);
        if !in_range || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(f));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    /// 60/20/20.
    fn default() -> Self {
        Self { train_fraction: 0.6, val_fraction: 0.2, test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: TimeSeries,
    pub val: TimeSeries,
    pub test: TimeSeries,
}

impl DatasetSplits {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Chronological split. Train and validation lengths are floored; the test split takes the rest.
pub fn split(series: &TimeSeries, spec: &SplitSpec) -> Result<DatasetSplits> {
    spec.validate()?;
    let n = series.len();
    // a tiny epsilon keeps products like 0.6 * 10 = 5.999... from flooring down
    let n_train = (spec.train_fraction * n as f64 + 1e-9).floor() as usize;
    let n_val = (spec.val_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(DataError::SeriesTooShort { needed: 3, have: n });
    }
    Ok(DatasetSplits {
        train: series.slice(0, n_train)?,
        val: series.slice(n_train, n_train + n_val)?,
        test: series.slice(n_train + n_val, n)?,
    })
}

/// Affine scaling parameters fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub min: f64,
    pub max: f64,
}

impl MinMaxParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let p = Self { min, max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(DataError::InvalidParams { min: self.min, max: self.max });
        }
        Ok(())
    }

    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn unscale(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

pub fn fit_minmax(train: &TimeSeries) -> Result<MinMaxParams> {
    let min = train.values().iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(DataError::DegenerateRange(min));
    }
    MinMaxParams::new(min, max)
}

/// Scales into the training range. Values outside it land outside `[0, 1]`; nothing is clipped.
pub fn transform(series: &TimeSeries, params: &MinMaxParams) -> Result<TimeSeries> {
    params.validate()?;
    series.map_values(|v| params.scale(v))
}

pub fn inverse_transform(series: &TimeSeries, params: &MinMaxParams) -> Result<TimeSeries> {
    params.validate()?;
    series.map_values(|v| params.unscale(v))
}

/// Supervised view of a series: each row holds `lag` consecutive values, the target is the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    lag: usize,
}

impl WindowedDataset {
    /// Explicit supervised rows; `inputs` is row-major with `lag` values per target.
    pub fn from_rows(inputs: Vec<f64>, targets: Vec<f64>, lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(DataError::ZeroLag);
        }
        if inputs.len() != targets.len() * lag {
            return Err(DataError::ShapeMismatch { inputs: inputs.len(), targets: targets.len(), lag });
        }
        if let Some(pos) = inputs.iter().chain(&targets).position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(pos));
        }
        Ok(Self { inputs, targets, lag })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.lag..(i + 1) * self.lag]
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.lag)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Rows `[from, to)` as a new dataset.
    pub fn rows(&self, from: usize, to: usize) -> Self {
        Self {
            inputs: self.inputs[from * self.lag..to * self.lag].to_vec(),
            targets: self.targets[from..to].to_vec(),
            lag: self.lag,
        }
    }
}

pub fn window(series: &TimeSeries, lag: usize) -> Result<WindowedDataset> {
    window_values(series.values(), lag)
}

pub fn window_values(values: &[f64], lag: usize) -> Result<WindowedDataset> {
    if lag == 0 {
        return Err(DataError::ZeroLag);
    }
    if values.len() <= lag {
        return Err(DataError::SeriesTooShort { needed: lag + 1, have: values.len() });
    }
    let n = values.len() - lag;
    let mut inputs = Vec::with_capacity(n * lag);
    for w in values.windows(lag).take(n) {
        inputs.extend_from_slice(w);
    }
    Ok(WindowedDataset { inputs, targets: values[lag..].to_vec(), lag })
}

/// Reads a `week,height` CSV. A header row is detected when its week field is not an integer.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DataError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut weeks = Vec::new();
    let mut values = Vec::new();
    let mut row_no = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse { row: i + 1, msg: e.to_string() })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|w| w.parse::<i64>().is_err()) {
            // header
            continue;
        }
        row_no += 1;
        if rec.len() != 2 {
            return Err(DataError::Parse {
                row: row_no,
                msg: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        let week: i64 = rec[0].parse().map_err(|_| DataError::Parse {
            row: row_no,
            msg: format!("invalid week {:?}", &rec[0]),
        })?;
        let height: f64 = rec[1].parse().map_err(|_| DataError::Parse {
            row: row_no,
            msg: format!("invalid height {:?}", &rec[1]),
        })?;
        if !height.is_finite() {
            return Err(DataError::Parse { row: row_no, msg: "non-finite height".into() });
        }
        weeks.push(week);
        values.push(height);
    }
    if values.is_empty() {
        return Err(DataError::Empty);
    }
    TimeSeries::with_timestamps(values, weeks)
}

pub fn to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("week,height\n");
    for (i, v) in series.values().iter().enumerate() {
        let week = match series.timestamps() {
            Some(ts) => ts[i],
            None => series.start_index() + i as i64,
        };
        out.push_str(&format!("{week},{v}\n"));
    }
    out
}

/// Seasonal sine plus linear trend plus seeded Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub length: usize,
    pub period: f64,
    pub amplitude: f64,
    pub level: f64,
    pub trend: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 1757,
            period: 52.0,
            amplitude: 40.0,
            level: 50.0,
            trend: 0.01,
            noise: 5.0,
            seed: 7,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeries> {
    if spec.length == 0 {
        return Err(DataError::InvalidSynthetic("length must be positive".into()));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(DataError::InvalidSynthetic("noise scale must be non-negative".into()));
    }
    if !(spec.period > 0.0) {
        return Err(DataError::InvalidSynthetic("period must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise)
        .map_err(|e| DataError::InvalidSynthetic(e.to_string()))?;
    let values = (0..spec.length)
        .map(|t| {
            let t = t as f64;
            spec.level
                + spec.amplitude * (2.0 * PI * t / spec.period).sin()
                + spec.trend * t
                + noise.sample(&mut rng)
        })
        .collect();
    let weeks = (1..=spec.length as i64).collect();
    TimeSeries::with_timestamps(values, weeks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::from_values(v.to_vec()).unwrap()
    }

    fn ramp(n: usize) -> TimeSeries {
        ts(&(0..n).map(|i| i as f64).collect::<Vec<_>>())
    }

    #[test]
    fn split_lengths() {
        let spec = SplitSpec::default();
        assert_eq!(split(&ramp(10), &spec).unwrap().sizes(), (6, 2, 2));
        assert_eq!(split(&ramp(1757), &spec).unwrap().sizes(), (1054, 351, 352));
        assert_eq!(split(&ramp(5), &spec).unwrap().sizes(), (3, 1, 1));
        assert!(matches!(split(&ramp(2), &spec), Err(DataError::SeriesTooShort { .. })));
    }

    #[test]
    fn split_spec_must_sum_to_one() {
        assert!(SplitSpec::new(0.6, 0.2, 0.3).is_err());
        assert!(SplitSpec::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitSpec::new(0.5, 0.25, 0.25).is_ok());
    }

    #[test]
    fn minmax_fit() {
        assert_eq!(fit_minmax(&ts(&[0.0, 50.0, 200.0])).unwrap(), MinMaxParams { min: 0.0, max: 200.0 });
        assert_eq!(fit_minmax(&ts(&[7.0])), Err(DataError::DegenerateRange(7.0)));
        assert_eq!(fit_minmax(&ts(&[-1.0, 1.0])).unwrap(), MinMaxParams { min: -1.0, max: 1.0 });
    }

    #[test]
    fn transform_and_inverse() {
        let p = MinMaxParams::new(0.0, 200.0).unwrap();
        let out = transform(&ts(&[50.0, 0.0, 250.0]), &p).unwrap();
        assert_eq!(out.values(), &[0.25, 0.0, 1.25]);
        assert_eq!(inverse_transform(&ts(&[0.25]), &p).unwrap().values(), &[50.0]);
        let sym = MinMaxParams::new(-1.0, 1.0).unwrap();
        assert_eq!(inverse_transform(&ts(&[0.0]), &sym).unwrap().values(), &[-1.0]);

        let fitted = fit_minmax(&ts(&[3.2, 99.1])).unwrap();
        let back = inverse_transform(&transform(&ts(&[3.2, 99.1]), &fitted).unwrap(), &fitted).unwrap();
        for (a, b) in back.values().iter().zip([3.2, 99.1]) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(MinMaxParams::new(1.0, 1.0).is_err());
    }

    #[test]
    fn windowing() {
        let w = window(&ts(&[10.0, 20.0, 30.0, 40.0, 50.0]), 2).unwrap();
        let rows: Vec<Vec<f64>> = w.inputs().map(<[f64]>::to_vec).collect();
        assert_eq!(rows, vec![vec![10.0, 20.0], vec![20.0, 30.0], vec![30.0, 40.0]]);
        assert_eq!(w.targets(), &[30.0, 40.0, 50.0]);

        assert!(matches!(window(&ts(&[1.0, 2.0]), 2), Err(DataError::SeriesTooShort { .. })));

        let w = window(&ts(&[1.0, 2.0, 3.0]), 1).unwrap();
        assert_eq!(w.input(0), &[1.0]);
        assert_eq!(w.input(1), &[2.0]);
        assert_eq!(w.targets(), &[2.0, 3.0]);
        assert_eq!(window(&ts(&[1.0, 2.0, 3.0]), 0), Err(DataError::ZeroLag));
    }

    #[test]
    fn csv_parsing() {
        let s = parse_csv("1,15.0\n2,17.5").unwrap();
        assert_eq!(s.values(), &[15.0, 17.5]);
        let s = parse_csv("week,height\r\n1,15.0\r\n2,17.5\r\n").unwrap();
        assert_eq!(s.values(), &[15.0, 17.5]);
        assert_eq!(s.timestamps(), Some(&[1, 2][..]));
        match parse_csv("1,abc\n") {
            Err(DataError::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_csv("2,1.0\n1,2.0\n"), Err(DataError::NonMonotonicTimestamps(2)));
        assert!(matches!(parse_csv("1,NaN\n"), Err(DataError::Parse { .. })));
    }

    #[test]
    fn csv_writer_roundtrips() {
        let s = generate_synthetic(&SyntheticSpec { length: 60, ..Default::default() }).unwrap();
        assert_eq!(parse_csv(&to_csv(&s)).unwrap(), s);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec { length: 1757, amplitude: 40.0, period: 52.0, seed: 7, ..Default::default() };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1757);
        let c = generate_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
        assert!(generate_synthetic(&SyntheticSpec { noise: -1.0, ..spec }).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(TimeSeries::from_values(vec![1.0, f64::NAN]), Err(DataError::NonFinite(1)));
        assert_eq!(TimeSeries::from_values(vec![]), Err(DataError::Empty));
    }

    proptest! {
        #[test]
        fn split_is_partition(values in prop::collection::vec(-1e3f64..1e3, 10..400)) {
            let s = ts(&values);
            let sp = split(&s, &SplitSpec::default()).unwrap();
            let (a, b, c) = sp.sizes();
            prop_assert_eq!(a + b + c, values.len());
            let joined: Vec<f64> = [sp.train.values(), sp.val.values(), sp.test.values()].concat();
            prop_assert_eq!(joined, values);
        }

        #[test]
        fn scaling_roundtrip(values in prop::collection::vec(-1e3f64..1e3, 2..100)) {
            let s = ts(&values);
            if let Ok(p) = fit_minmax(&s) {
                let fwd = transform(&inverse_transform(&s, &p).unwrap(), &p).unwrap();
                let back = inverse_transform(&transform(&s, &p).unwrap(), &p).unwrap();
                for ((x, y), z) in values.iter().zip(back.values()).zip(fwd.values()) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                    prop_assert!((x - z).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }

        #[test]
        fn minmax_ignores_held_out(values in prop::collection::vec(-1e3f64..1e3, 20..200), shift in -500f64..500.0) {
            let s = ts(&values);
            let sp = split(&s, &SplitSpec::default()).unwrap();
            let n_train = sp.train.len();
            let perturbed: Vec<f64> = values.iter().enumerate()
                .map(|(i, v)| if i >= n_train { v + shift } else { *v }).collect();
            let sp2 = split(&ts(&perturbed), &SplitSpec::default()).unwrap();
            prop_assert_eq!(fit_minmax(&sp.train).ok(), fit_minmax(&sp2.train).ok());
        }

        #[test]
        fn window_rows(values in prop::collection::vec(-10f64..10.0, 2..60), lag in 1usize..6) {
            prop_assume!(values.len() > lag);
            let w = window(&ts(&values), lag).unwrap();
            prop_assert_eq!(w.len(), values.len() - lag);
            for i in 0..w.len() {
                prop_assert_eq!(w.input(i), &values[i..i + lag]);
                prop_assert_eq!(w.targets()[i], values[i + lag]);
            }
        }
    }
}
