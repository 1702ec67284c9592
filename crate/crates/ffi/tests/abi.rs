use std::ffi::{CStr, CString};
use std::ptr;

use tsforecast_ffi::*;

fn last_error() -> String {
    let p = tsf_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn default_series(length: usize) -> *mut TsfSeries {
    let mut s = ptr::null_mut();
    let status = unsafe { tsf_series_generate(length, 52.0, 40.0, 50.0, 0.01, 5.0, 7, &mut s) };
    assert_eq!(status, TsfStatus::Ok);
    s
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(tsf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn series_values_roundtrip() {
    let values = [1.5, -2.0, 3.25, 8.0];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(tsf_series_from_values(values.as_ptr(), values.len(), &mut s), TsfStatus::Ok);
        assert_eq!(tsf_series_len(s), 4);
        let mut buf = [0.0; 4];
        assert_eq!(tsf_series_values(s, buf.as_mut_ptr(), 4), TsfStatus::Ok);
        assert_eq!(buf, values);
        assert_eq!(tsf_series_values(s, buf.as_mut_ptr(), 3), TsfStatus::InvalidArgument);
        tsf_series_free(s);
        assert_eq!(tsf_series_len(ptr::null()), 0);
        tsf_series_free(ptr::null_mut());
    }
}

#[test]
fn generated_series_matches_library() {
    let s = default_series(200);
    let spec = tsforecast::data::SyntheticSpec { length: 200, ..Default::default() };
    let expected = tsforecast::data::generate_synthetic(&spec).unwrap();
    let mut buf = vec![0.0; 200];
    unsafe {
        assert_eq!(tsf_series_values(s, buf.as_mut_ptr(), buf.len()), TsfStatus::Ok);
        tsf_series_free(s);
    }
    assert_eq!(buf, expected.values());
}

#[test]
fn rejected_inputs_set_status_and_message() {
    let mut s = ptr::null_mut();
    unsafe {
        let bad = [1.0, f64::NAN];
        assert_eq!(tsf_series_from_values(bad.as_ptr(), 2, &mut s), TsfStatus::Data);
        assert!(last_error().contains("non-finite"));
        assert!(s.is_null());

        assert_eq!(tsf_series_from_values(ptr::null(), 3, &mut s), TsfStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.csv").unwrap();
        assert_eq!(tsf_series_load_csv(missing.as_ptr(), &mut s), TsfStatus::Io);
        assert!(last_error().contains("x.csv"));

        let ok = [1.0, 2.0];
        assert_eq!(tsf_series_from_values(ok.as_ptr(), 2, &mut s), TsfStatus::Ok);
        assert!(tsf_last_error().is_null());
        tsf_series_free(s);
    }
}

#[test]
fn metrics_match_known_values() {
    let (obs, pred) = ([2.0, 4.0], [1.0, 2.0]);
    let (mut r, mut m) = (0.0, 0.0);
    unsafe {
        assert_eq!(tsf_rmse(obs.as_ptr(), pred.as_ptr(), 2, &mut r), TsfStatus::Ok);
        assert_eq!(tsf_mae(obs.as_ptr(), pred.as_ptr(), 2, &mut m), TsfStatus::Ok);
        assert_eq!(tsf_rmse(obs.as_ptr(), pred.as_ptr(), 0, &mut r), TsfStatus::InvalidArgument);
    }
    assert_eq!(m, 1.5);
    assert_eq!(r, 2.5f64.sqrt());
}

#[test]
fn train_forecast_save_load() {
    let s = default_series(300);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let family = CString::new("gru").unwrap();
    let config = CString::new("{epochs: 3, hidden_sizes: [4]}").unwrap();
    let mut history = vec![0.0; 300];
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(tsf_model_train(family.as_ptr(), config.as_ptr(), s, &mut m), TsfStatus::Ok);
        assert_eq!(tsf_series_values(s, history.as_mut_ptr(), 300), TsfStatus::Ok);
        let mut a = [0.0; 5];
        assert_eq!(tsf_model_forecast(m, history.as_ptr(), 300, 5, a.as_mut_ptr()), TsfStatus::Ok);
        assert!(a.iter().all(|v| v.is_finite()));

        assert_eq!(tsf_model_save(m, path.as_ptr()), TsfStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(tsf_model_load(path.as_ptr(), &mut loaded), TsfStatus::Ok);
        let mut b = [0.0; 5];
        assert_eq!(tsf_model_forecast(loaded, history.as_ptr(), 300, 5, b.as_mut_ptr()), TsfStatus::Ok);
        assert_eq!(a, b);

        let mut json = ptr::null_mut();
        assert_eq!(tsf_model_to_json(m, &mut json), TsfStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"gru\""));
        tsf_string_free(json);

        // lag is 2 by default, one value is not enough
        assert_eq!(tsf_model_forecast(m, history.as_ptr(), 1, 1, a.as_mut_ptr()), TsfStatus::InvalidArgument);
        tsf_model_free(m);
        tsf_model_free(loaded);
        tsf_series_free(s);
    }
}

#[test]
fn training_errors_map_to_codes() {
    let s = default_series(300);
    let mut m = ptr::null_mut();
    let lstm = CString::new("lstm").unwrap();
    unsafe {
        let unknown = CString::new("prophet").unwrap();
        assert_eq!(tsf_model_train(unknown.as_ptr(), ptr::null(), s, &mut m), TsfStatus::InvalidArgument);
        assert!(last_error().contains("prophet"));

        let bad = CString::new("{no_such_field: 1}").unwrap();
        assert_eq!(tsf_model_train(lstm.as_ptr(), bad.as_ptr(), s, &mut m), TsfStatus::Config);

        let explode = CString::new("{learning_rate: 1e4, epochs: 20}").unwrap();
        let mlp = CString::new("mlp").unwrap();
        assert_eq!(tsf_model_train(mlp.as_ptr(), explode.as_ptr(), s, &mut m), TsfStatus::Numerical);
        assert!(m.is_null());
        tsf_series_free(s);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tsforecast.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
