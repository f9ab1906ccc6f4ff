use std::ffi::{c_void, CStr, CString};
use std::path::Path;
use std::ptr;

use aqcast_ffi::*;

fn last_error() -> String {
    let p = aq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn series(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            0.02 * i as f64
                + 4.0 * (2.0 * std::f64::consts::PI * i as f64 / 24.0).sin()
                + ((i * 7919) % 13) as f64 * 0.05
        })
        .collect()
}

#[test]
fn decompose_and_metrics() {
    let y = series(240);
    let (mut t, mut s, mut r) = (vec![0.0; 240], vec![0.0; 240], vec![0.0; 240]);
    let st = unsafe { aq_decompose(y.as_ptr(), 240, 24, t.as_mut_ptr(), s.as_mut_ptr(), r.as_mut_ptr()) };
    assert_eq!(st, AqStatus::Ok);
    for i in 0..240 {
        assert!((y[i] - t[i] - s[i] - r[i]).abs() < 1e-9);
    }

    let mut m = AqMetrics::default();
    let (a, b) = ([0.0, 2.0], [1.0, 1.0]);
    assert_eq!(unsafe { aq_metrics(a.as_ptr(), b.as_ptr(), 2, &mut m) }, AqStatus::Ok);
    assert_eq!((m.rmse, m.mae, m.r2, m.has_r2), (1.0, 1.0, 0.0, 1));
    let flat = [1.0, 1.0];
    assert_eq!(
        unsafe { aq_metrics(flat.as_ptr(), b.as_ptr(), 2, &mut m) },
        AqStatus::Ok
    );
    assert_eq!(m.has_r2, 0);
    assert_eq!(
        unsafe { aq_metrics(flat.as_ptr(), b.as_ptr(), 1, &mut m) },
        AqStatus::Data
    );
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_usage_errors() {
    let mut out = [0.0; 4];
    let st = unsafe { aq_decompose(ptr::null(), 4, 2, out.as_mut_ptr(), out.as_mut_ptr(), out.as_mut_ptr()) };
    assert_eq!(st, AqStatus::Usage);
    assert!(last_error().contains("null"));
    assert_eq!(
        unsafe { aq_arima_forecast(ptr::null(), 3, out.as_mut_ptr()) },
        AqStatus::Usage
    );
    unsafe {
        aq_arima_free(ptr::null_mut());
        aq_residual_free(ptr::null_mut());
    }
    assert!(!unsafe { CStr::from_ptr(aq_version()) }.to_bytes().is_empty());
}

#[test]
fn arima_handle_lifecycle() {
    let y = series(400);
    let mut h: *mut AqArima = ptr::null_mut();
    assert_eq!(
        unsafe { aq_arima_fit(y.as_ptr(), y.len(), 2, 0, 1, &mut h) },
        AqStatus::Ok
    );
    let (mut phi, mut theta, mut c, mut s2) = ([0.0; 2], [0.0; 1], 0.0, 0.0);
    assert_eq!(
        unsafe { aq_arima_coefficients(h, phi.as_mut_ptr(), theta.as_mut_ptr(), &mut c, &mut s2) },
        AqStatus::Ok
    );
    assert!(s2 > 0.0 && phi.iter().all(|v| v.is_finite()));

    let mut f = [0.0; 5];
    assert_eq!(unsafe { aq_arima_forecast(h, 5, f.as_mut_ptr()) }, AqStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { aq_arima_save(h, path.as_ptr()) }, AqStatus::Ok);
    let mut h2: *mut AqArima = ptr::null_mut();
    assert_eq!(unsafe { aq_arima_load(path.as_ptr(), &mut h2) }, AqStatus::Ok);
    let mut f2 = [0.0; 5];
    unsafe { aq_arima_forecast(h2, 5, f2.as_mut_ptr()) };
    assert_eq!(f, f2);
    unsafe {
        aq_arima_free(h);
        aq_arima_free(h2);
    }

    let short = [1.0, 2.0];
    let mut h3: *mut AqArima = ptr::null_mut();
    assert_eq!(
        unsafe { aq_arima_fit(short.as_ptr(), 2, 3, 0, 0, &mut h3) },
        AqStatus::Data
    );
    assert!(h3.is_null());
}

#[test]
fn residual_model_roundtrip() {
    let y = series(300);
    let cfg = CString::new(
        r#"{"window": 12, "kernel_sizes": [3], "filters_per_branch": [2], "bilstm_units": 3, "max_epochs": 3}"#,
    )
    .unwrap();
    let mut h: *mut AqResidualModel = ptr::null_mut();
    assert_eq!(
        unsafe { aq_residual_fit(y.as_ptr(), y.len(), cfg.as_ptr(), &mut h) },
        AqStatus::Ok
    );
    let mut w = 0usize;
    assert_eq!(unsafe { aq_residual_window(h, &mut w) }, AqStatus::Ok);
    assert_eq!(w, 12);
    let (mut p, mut att) = (0.0, vec![0.0; 12]);
    let win = &y[y.len() - 12..];
    assert_eq!(
        unsafe { aq_residual_predict(h, win.as_ptr(), 12, &mut p, att.as_mut_ptr()) },
        AqStatus::Ok
    );
    assert!(p.is_finite() && (att.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(
        unsafe { aq_residual_predict(h, win.as_ptr(), 11, &mut p, ptr::null_mut()) },
        AqStatus::Data
    );

    let bad = CString::new(r#"{"windw": 12}"#).unwrap();
    let mut h2: *mut AqResidualModel = ptr::null_mut();
    assert_eq!(
        unsafe { aq_residual_fit(y.as_ptr(), y.len(), bad.as_ptr(), &mut h2) },
        AqStatus::Usage
    );
    unsafe { aq_residual_free(h) };
}

unsafe extern "C" fn sphere(x: *const f64, dim: usize, user: *mut c_void) -> f64 {
    *(user as *mut usize) += 1;
    std::slice::from_raw_parts(x, dim).iter().map(|v| v * v).sum()
}

#[test]
fn optimize_with_callback() {
    let (lo, hi) = ([-5.0; 3], [5.0; 3]);
    let mut calls = 0usize;
    let (mut best, mut f) = ([0.0; 3], 0.0);
    let st = unsafe {
        aq_optimize(
            lo.as_ptr(),
            hi.as_ptr(),
            3,
            ptr::null(),
            Some(sphere),
            &mut calls as *mut usize as *mut c_void,
            best.as_mut_ptr(),
            &mut f,
        )
    };
    assert_eq!(st, AqStatus::Ok);
    assert!(calls >= 30 && f < 1e-2);
    assert!((best.iter().map(|v| v * v).sum::<f64>() - f).abs() < 1e-12);
    let st = unsafe {
        aq_optimize(
            lo.as_ptr(),
            hi.as_ptr(),
            3,
            ptr::null(),
            None,
            ptr::null_mut(),
            best.as_mut_ptr(),
            &mut f,
        )
    };
    assert_eq!(st, AqStatus::Usage);
}

#[test]
fn forecast_run_writes_artifacts() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let cfg = CString::new(fixtures.join("synthetic.toml").to_str().unwrap()).unwrap();
    let input = CString::new(fixtures.join("synthetic.csv").to_str().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let inputs = [input.as_ptr()];
    let mut m = AqMetrics::default();
    let st = unsafe { aq_forecast_run(cfg.as_ptr(), inputs.as_ptr(), 1, out.as_ptr(), &mut m) };
    assert_eq!(st, AqStatus::Ok, "{}", last_error());
    assert!(m.has_r2 == 1 && m.r2 > 0.5 && (m.rmse * m.rmse - m.mse).abs() < 1e-9 * m.mse);
    assert!(dir.path().join("predictions.csv").exists());

    let missing = CString::new("/nonexistent.toml").unwrap();
    let st = unsafe { aq_forecast_run(missing.as_ptr(), inputs.as_ptr(), 1, out.as_ptr(), &mut m) };
    assert_eq!(st, AqStatus::Usage);
}
