//! Point-forecast error metrics, computed in original data units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {observed} observed vs {predicted} predicted")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

fn check(observed: &[f64], predicted: &[f64]) -> Result<(), MetricsError> {
    if observed.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = observed
        .iter()
        .zip(predicted)
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check(observed, predicted)?;
    let sse: f64 = observed.iter().zip(predicted).map(|(x, y)| (y - x) * (y - x)).sum();
    Ok((sse / observed.len() as f64).sqrt())
}

pub fn mae(observed: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check(observed, predicted)?;
    let sae: f64 = observed.iter().zip(predicted).map(|(x, y)| (y - x).abs()).sum();
    Ok(sae / observed.len() as f64)
}

/// Naive forecast: each prediction is the previous observation.
/// Returns `(observed[1..], observed[..n-1])`.
pub fn persistence(series: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if series.len() < 2 {
        return (Vec::new(), Vec::new());
    }
    (series[1..].to_vec(), series[..series.len() - 1].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub runtime_seconds: f64,
    pub n: usize,
    pub model_tag: String,
    pub config_digest: String,
}

pub fn evaluate(
    observed: &[f64],
    predicted: &[f64],
    runtime_seconds: f64,
    model_tag: &str,
    config_digest: &str,
) -> Result<EvalReport, MetricsError> {
    let r = rmse(observed, predicted)?;
    let m = mae(observed, predicted)?;
    // power-mean inequality; slack covers summation rounding when all errors are equal
    assert!(r >= m * (1.0 - 1e-12), "rmse {r} < mae {m}");
    Ok(EvalReport {
        rmse: r,
        mae: m,
        runtime_seconds,
        n: observed.len(),
        model_tag: model_tag.to_owned(),
        config_digest: config_digest.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0], &[3.0]).unwrap(), 2.0);
        assert_eq!(rmse(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 2.5f64.sqrt());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 1.5);
        assert_eq!(mae(&[0.0], &[-3.0]).unwrap(), 3.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { observed: 1, predicted: 2 })
        );
        assert_eq!(mae(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(rmse(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricsError::NonFinite(1)));
    }

    #[test]
    fn evaluate_examples() {
        let r = evaluate(&[1.0, 2.0], &[1.0, 2.0], 0.5, "mlp", "abc").unwrap();
        assert_eq!((r.rmse, r.mae, r.runtime_seconds, r.n), (0.0, 0.0, 0.5, 2));
        let r = evaluate(&[2.0, 4.0], &[1.0, 2.0], 0.0, "mlp", "abc").unwrap();
        assert!((r.rmse - 1.5811).abs() < 1e-4);
        assert_eq!(r.mae, 1.5);
        assert!(matches!(
            evaluate(&[1.0], &[1.0, 2.0], 0.0, "x", "y"),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn persistence_pairs() {
        let (obs, pred) = persistence(&[1.0, 2.0, 4.0]);
        assert_eq!(obs, vec![2.0, 4.0]);
        assert_eq!(pred, vec![1.0, 2.0]);
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..50).prop_flat_map(|n| {
            (
                prop::collection::vec(-100f64..100.0, n),
                prop::collection::vec(-100f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae((y, x) in pairs()) {
            prop_assert!(rmse(&y, &x).unwrap() >= mae(&y, &x).unwrap() * (1.0 - 1e-12));
        }

        #[test]
        fn translation_invariant((y, x) in pairs(), c in -50f64..50.0) {
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((rmse(&ys, &xs).unwrap() - rmse(&y, &x).unwrap()).abs() < 1e-9);
            prop_assert!((mae(&ys, &xs).unwrap() - mae(&y, &x).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn scale_linear((y, x) in pairs(), a in -5f64..5.0) {
            let ys: Vec<f64> = y.iter().map(|v| v * a).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            prop_assert!((rmse(&ys, &xs).unwrap() - a.abs() * rmse(&y, &x).unwrap()).abs() < 1e-9);
            prop_assert!((mae(&ys, &xs).unwrap() - a.abs() * mae(&y, &x).unwrap()).abs() < 1e-9);
        }
    }
}
