//! C ABI over the tsforecast toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns a [`TsfStatus`]; the
//! message for the last failure on the calling thread is available from
//! [`tsf_last_error`]. Panics are caught at the boundary and reported as
//! `TSF_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsforecast::data::{self, DataError, SplitSpec, SyntheticSpec, TimeSeries};
use tsforecast::metrics;
use tsforecast::model::{self, Family, ModelConfig, ModelError, Prepared, TrainedForecaster};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// The series or file contents were rejected.
    Data = 3,
    /// The model configuration or model file was rejected.
    Config = 4,
    /// Training or evaluation produced non-finite values or failed to converge.
    Numerical = 5,
    /// A file could not be read or written.
    Io = 6,
    /// A panic was caught at the boundary.
    Panic = 7,
}

/// Opaque handle to a time series.
pub struct TsfSeries(TimeSeries);

/// Opaque handle to a trained forecaster.
pub struct TsfModel(TrainedForecaster);

struct Failure(TsfStatus, String);

impl Failure {
    fn null(name: &str) -> Self {
        Failure(TsfStatus::NullPointer, format!("{name} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(TsfStatus::InvalidArgument, msg.into())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::Io { .. } => TsfStatus::Io,
            _ => TsfStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = if e.is_numerical() {
            TsfStatus::Numerical
        } else {
            match &e {
                ModelError::Io { .. } | ModelError::Data(DataError::Io { .. }) => TsfStatus::Io,
                ModelError::Data(_) => TsfStatus::Data,
                ModelError::InsufficientHistory { .. } => TsfStatus::InvalidArgument,
                _ => TsfStatus::Config,
            }
        };
        Failure(status, e.to_string())
    }
}

impl From<metrics::MetricsError> for Failure {
    fn from(e: metrics::MetricsError) -> Self {
        let status = match e {
            metrics::MetricsError::NonFinite(_) => TsfStatus::Numerical,
            _ => TsfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            TsfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tsf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tsf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Seasonal synthetic series: level + amplitude·sin(2πt/period) + trend·t + N(0, noise²).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_generate(
    length: usize,
    period: f64,
    amplitude: f64,
    level: f64,
    trend: f64,
    noise: f64,
    seed: u64,
    out: *mut *mut TsfSeries,
) -> TsfStatus {
    guard(|| {
        let spec = SyntheticSpec { length, period, amplitude, level, trend, noise, seed };
        write_out(out, TsfSeries(data::generate_synthetic(&spec)?))
    })
}

/// Copies `len` values into a new series.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_from_values(values: *const f64, len: usize, out: *mut *mut TsfSeries) -> TsfStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        write_out(out, TsfSeries(TimeSeries::from_values(values.to_vec())?))
    })
}

/// Reads a `week,value` CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_load_csv(path: *const c_char, out: *mut *mut TsfSeries) -> TsfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        write_out(out, TsfSeries(data::load_csv(path)?))
    })
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_len(series: *const TsfSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the observations into `buf`, which must hold at least `tsf_series_len` values.
///
/// # Safety
/// `series` must be a live handle and `buf` must point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_values(series: *const TsfSeries, buf: *mut f64, buf_len: usize) -> TsfStatus {
    guard(|| {
        let values = handle(series, "series")?.0.values();
        if buf_len < values.len() {
            return Err(Failure::invalid(format!("buffer holds {buf_len} values, series has {}", values.len())));
        }
        if buf.is_null() {
            return Err(Failure::null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_series_free(series: *mut TsfSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

unsafe fn score(
    observed: *const f64,
    predicted: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> Result<f64, metrics::MetricsError>,
) -> TsfStatus {
    guard(|| {
        let obs = slice_arg(observed, len, "observed")?;
        let pred = slice_arg(predicted, len, "predicted")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = f(obs, pred)?;
        Ok(())
    })
}

/// Root mean squared error of two equal-length arrays.
///
/// # Safety
/// Both arrays must hold `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_rmse(observed: *const f64, predicted: *const f64, len: usize, out: *mut f64) -> TsfStatus {
    score(observed, predicted, len, out, metrics::rmse)
}

/// Mean absolute error of two equal-length arrays.
///
/// # Safety
/// Both arrays must hold `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_mae(observed: *const f64, predicted: *const f64, len: usize, out: *mut f64) -> TsfStatus {
    score(observed, predicted, len, out, metrics::mae)
}

/// Trains a model on the chronological 60/20/20 split of `series`.
///
/// `family` is one of `arima`, `mlp`, `lstm`, `gru`, `tcn`. `config` is a JSON5 object of
/// overrides on the family defaults, or null for the defaults.
///
/// # Safety
/// `family` and non-null `config` must be NUL-terminated; `series` must be a live handle;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_train(
    family: *const c_char,
    config: *const c_char,
    series: *const TsfSeries,
    out: *mut *mut TsfModel,
) -> TsfStatus {
    guard(|| {
        let family: Family = str_arg(family, "family")?.parse().map_err(Failure::invalid)?;
        let config = if config.is_null() {
            ModelConfig::default_for(family)
        } else {
            ModelConfig::parse(family, str_arg(config, "config")?)?
        };
        let prepared = Prepared::new(&handle(series, "series")?.0, &SplitSpec::default())?;
        let fitted = model::fit(&config, &prepared)?;
        write_out(out, TsfModel(fitted.forecaster))
    })
}

/// Forecasts `steps` values past the end of `history` (raw units), feeding predictions back.
///
/// # Safety
/// `model` must be a live handle, `history` must hold `history_len` doubles and `out`
/// must have room for `steps` doubles.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_forecast(
    model: *const TsfModel,
    history: *const f64,
    history_len: usize,
    steps: usize,
    out: *mut f64,
) -> TsfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let history = slice_arg(history, history_len, "history")?;
        if steps == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let values = m.0.forecast_ahead(history, steps)?;
        std::slice::from_raw_parts_mut(out, steps).copy_from_slice(&values);
        Ok(())
    })
}

/// Serialized model as an owned JSON string; release it with [`tsf_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_to_json(model: *const TsfModel, out: *mut *mut c_char) -> TsfStatus {
    guard(|| {
        let json = handle(model, "model")?.0.to_json();
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = CString::new(json).map_err(|e| Failure::invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_save(model: *const TsfModel, path: *const c_char) -> TsfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        m.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_load(path: *const c_char, out: *mut *mut TsfModel) -> TsfStatus {
    guard(|| {
        let m = TrainedForecaster::load(str_arg(path, "path")?)?;
        write_out(out, TsfModel(m))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_model_free(model: *mut TsfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
