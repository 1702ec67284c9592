use proptest::prelude::*;
use tsforecast::data::*;
use tsforecast::model::{Prepared, Split};

#[test]
fn default_series_splits_60_20_20() {
    let s = generate_synthetic(&SyntheticSpec::default()).unwrap();
    assert_eq!(s.len(), 1757);
    let p = Prepared::new(&s, &SplitSpec::default()).unwrap();
    assert_eq!(p.sizes(), (1054, 351, 352));
    assert_eq!(p.bounds(Split::Test), (1405, 1757));
}

#[test]
fn scaler_ignores_validation_and_test() {
    let s = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let base = Prepared::new(&s, &SplitSpec::default()).unwrap();
    let mut values = s.values().to_vec();
    for v in &mut values[1054..] {
        *v = *v * 7.0 + 1000.0;
    }
    let perturbed = Prepared::new(&TimeSeries::from_values(values).unwrap(), &SplitSpec::default()).unwrap();
    assert_eq!(base.scaler, perturbed.scaler);

    let mut values = s.values().to_vec();
    values[10] = 1e6;
    let moved = Prepared::new(&TimeSeries::from_values(values).unwrap(), &SplitSpec::default()).unwrap();
    assert_eq!(moved.scaler.max, 1e6);
}

#[test]
fn out_of_range_values_are_not_clipped() {
    let train = TimeSeries::from_values(vec![10.0, 20.0]).unwrap();
    let params = fit_minmax(&train).unwrap();
    let other = TimeSeries::from_values(vec![0.0, 30.0]).unwrap();
    assert_eq!(transform(&other, &params).unwrap().values(), &[-1.0, 2.0]);
}

#[test]
fn csv_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let s = generate_synthetic(&SyntheticSpec { length: 120, ..Default::default() }).unwrap();
    std::fs::write(&path, to_csv(&s)).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.values(), s.values());
    let missing = load_csv(dir.path().join("nope.csv")).unwrap_err();
    assert!(missing.to_string().contains("nope.csv"));
}

proptest! {
    #[test]
    fn normalize_roundtrip(values in proptest::collection::vec(-1e4f64..1e4, 10..200)) {
        let s = TimeSeries::from_values(values.clone()).unwrap();
        let Ok(splits) = split(&s, &SplitSpec::default()) else { return Ok(()) };
        let Ok(params) = fit_minmax(&splits.train) else { return Ok(()) };
        let back = inverse_transform(&transform(&s, &params).unwrap(), &params).unwrap();
        for (a, b) in values.iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(params.max - params.min));
        }
    }

    #[test]
    fn windows_cover_every_target(values in proptest::collection::vec(0.0f64..1.0, 2..60), lag in 1usize..6) {
        prop_assume!(values.len() > lag);
        let w = window_values(&values, lag).unwrap();
        prop_assert_eq!(w.len(), values.len() - lag);
        for i in 0..w.len() {
            prop_assert_eq!(w.input(i), &values[i..i + lag]);
            prop_assert_eq!(w.targets()[i], values[i + lag]);
        }
    }
}
