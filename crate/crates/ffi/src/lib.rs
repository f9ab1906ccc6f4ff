//! C ABI over the aqcast library.
//!
//! Every fallible call returns an [`AqStatus`]; on failure the message is
//! available from [`aq_last_error`] on the same thread. Models are opaque
//! handles owned by the caller and released with the matching `*_free`.
//! Output buffers are caller-allocated with the documented length.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aqcast::arima::{self, ArimaModel, ArimaOrder};
use aqcast::decompose::{stl_decompose, StlConfig};
use aqcast::pipeline::{self, Metrics, PipelineConfig};
use aqcast::residualnet::{NetConfig, ResidualModel};
use aqcast::uammo::{optimize, OptimizerConfig, SearchSpace};
use aqcast::{Error, ErrorKind, TimeSeries};

/// Status codes; the non-zero values match the CLI exit codes, plus
/// `AQ_STATUS_PANIC` for an internal fault.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
    Panic = 4,
}

/// Test-split metrics. `has_r2` is 0 when R² is undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AqMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub has_r2: i32,
}

impl From<&Metrics> for AqMetrics {
    fn from(m: &Metrics) -> Self {
        AqMetrics {
            mse: m.mse,
            rmse: m.rmse,
            mae: m.mae,
            r2: m.r2.unwrap_or(f64::NAN),
            has_r2: m.r2.is_some() as i32,
        }
    }
}

/// Fitted ARIMA model.
pub struct AqArima(ArimaModel);

/// Trained residual network.
pub struct AqResidualModel(ResidualModel);

/// Fitness callback for [`aq_optimize`]: returns the objective at `x`
/// (`dim` values). A non-finite return marks the point infeasible.
pub type AqFitnessFn = Option<unsafe extern "C" fn(x: *const f64, dim: usize, user_data: *mut c_void) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Lib(Error),
    Usage(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

type FfiResult = Result<(), Fail>;

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult) -> AqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AqStatus::Ok,
        Ok(Err(Fail::Usage(m))) => {
            set_error(m);
            AqStatus::Usage
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Usage => AqStatus::Usage,
                ErrorKind::Data => AqStatus::Data,
                ErrorKind::Numerical => AqStatus::Numerical,
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            AqStatus::Panic
        }
    }
}

fn usage<T>(msg: &str) -> Result<T, Fail> {
    Err(Fail::Usage(msg.to_string()))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return usage(&format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return usage(&format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<Option<String>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Some(s.to_string())),
        Err(_) => usage(&format!("{what} is not UTF-8")),
    }
}

unsafe fn required(p: *const c_char, what: &str) -> Result<String, Fail> {
    string(p, what)?.map_or_else(|| usage(&format!("{what} is null")), Ok)
}

unsafe fn json_or_default<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &str) -> Result<T, Fail> {
    match string(p, what)? {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(&s).map_err(|e| Fail::Usage(format!("{what}: {e}"))),
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return usage("output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().map_or_else(|| usage("handle is null"), Ok)
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn aq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Decompose `y` (`n` values) with the given seasonal period and default
/// smoother settings. Each output buffer holds `n` values.
#[no_mangle]
pub unsafe extern "C" fn aq_decompose(
    y: *const f64,
    n: usize,
    period: usize,
    trend: *mut f64,
    seasonal: *mut f64,
    residual: *mut f64,
) -> AqStatus {
    guard(|| {
        let y = slice(y, n, "y")?;
        let (t, s, r) = (
            slice_mut(trend, n, "trend")?,
            slice_mut(seasonal, n, "seasonal")?,
            slice_mut(residual, n, "residual")?,
        );
        let d = stl_decompose(&TimeSeries::hourly("y", y.to_vec()), &StlConfig::with_period(period))?;
        t.copy_from_slice(&d.trend.values);
        s.copy_from_slice(&d.seasonal.values);
        r.copy_from_slice(&d.residual.values);
        Ok(())
    })
}

/// MSE, RMSE, MAE and R² of `y_hat` against `y`.
#[no_mangle]
pub unsafe extern "C" fn aq_metrics(y: *const f64, y_hat: *const f64, n: usize, out: *mut AqMetrics) -> AqStatus {
    guard(|| {
        let m = Metrics::compute(slice(y, n, "y")?, slice(y_hat, n, "y_hat")?)?;
        match out.as_mut() {
            Some(o) => *o = AqMetrics::from(&m),
            None => return usage("out is null"),
        }
        Ok(())
    })
}

/// Fit ARIMA(p, d, q) by conditional sum of squares.
#[no_mangle]
pub unsafe extern "C" fn aq_arima_fit(
    y: *const f64,
    n: usize,
    p: usize,
    d: usize,
    q: usize,
    out: *mut *mut AqArima,
) -> AqStatus {
    guard(|| {
        let m = arima::fit_values(slice(y, n, "y")?, ArimaOrder::new(p, d, q))?;
        store(out, AqArima(m))
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_arima_load(path: *const c_char, out: *mut *mut AqArima) -> AqStatus {
    guard(|| store(out, AqArima(ArimaModel::load(required(path, "path")?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn aq_arima_save(model: *const AqArima, path: *const c_char) -> AqStatus {
    guard(|| Ok(handle(model)?.0.save(required(path, "path")?)?))
}

/// Multi-step forecast continuing the fitted series; writes `horizon` values.
#[no_mangle]
pub unsafe extern "C" fn aq_arima_forecast(model: *const AqArima, horizon: usize, out: *mut f64) -> AqStatus {
    guard(|| {
        let f = handle(model)?.0.forecast(horizon);
        slice_mut(out, horizon, "out")?.copy_from_slice(&f);
        Ok(())
    })
}

/// Coefficients. `phi` must hold `p` values and `theta` `q` values; any
/// output pointer may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn aq_arima_coefficients(
    model: *const AqArima,
    phi: *mut f64,
    theta: *mut f64,
    intercept: *mut f64,
    sigma2: *mut f64,
) -> AqStatus {
    guard(|| {
        let m = &handle(model)?.0;
        if !phi.is_null() {
            slice_mut(phi, m.phi.len(), "phi")?.copy_from_slice(&m.phi);
        }
        if !theta.is_null() {
            slice_mut(theta, m.theta.len(), "theta")?.copy_from_slice(&m.theta);
        }
        if let Some(c) = intercept.as_mut() {
            *c = m.intercept;
        }
        if let Some(s) = sigma2.as_mut() {
            *s = m.sigma2;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_arima_free(model: *mut AqArima) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Train the residual network on `n` values. `config_json` is a JSON
/// network config (missing fields take defaults) or NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn aq_residual_fit(
    residual: *const f64,
    n: usize,
    config_json: *const c_char,
    out: *mut *mut AqResidualModel,
) -> AqStatus {
    guard(|| {
        let config: NetConfig = json_or_default(config_json, "config_json")?;
        let (model, _) = ResidualModel::fit(
            &config,
            &TimeSeries::hourly("residual", slice(residual, n, "residual")?.to_vec()),
        )?;
        store(out, AqResidualModel(model))
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_residual_load(path: *const c_char, out: *mut *mut AqResidualModel) -> AqStatus {
    guard(|| store(out, AqResidualModel(ResidualModel::load(required(path, "path")?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn aq_residual_save(model: *const AqResidualModel, path: *const c_char) -> AqStatus {
    guard(|| Ok(handle(model)?.0.save(required(path, "path")?)?))
}

/// Input window length the model expects.
#[no_mangle]
pub unsafe extern "C" fn aq_residual_window(model: *const AqResidualModel, out: *mut usize) -> AqStatus {
    guard(|| match out.as_mut() {
        Some(o) => {
            *o = handle(model)?.0.config.window;
            Ok(())
        }
        None => usage("out is null"),
    })
}

/// One-step prediction from the last `len` values (`len` must equal the
/// model window). `attention`, if not NULL, receives `len` weights.
#[no_mangle]
pub unsafe extern "C" fn aq_residual_predict(
    model: *const AqResidualModel,
    window: *const f64,
    len: usize,
    out: *mut f64,
    attention: *mut f64,
) -> AqStatus {
    guard(|| {
        let (y, att) = handle(model)?.0.forward(slice(window, len, "window")?)?;
        match out.as_mut() {
            Some(o) => *o = y,
            None => return usage("out is null"),
        }
        if !attention.is_null() {
            slice_mut(attention, len, "attention")?.copy_from_slice(&att);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_residual_free(model: *mut AqResidualModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Minimize `fitness` over the box `[lower, upper]` (`dim` continuous
/// dimensions). `config_json` is a JSON optimizer config or NULL. Writes
/// the best point to `best_x` (`dim` values) and its value to `best_f`.
#[no_mangle]
pub unsafe extern "C" fn aq_optimize(
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    config_json: *const c_char,
    fitness: AqFitnessFn,
    user_data: *mut c_void,
    best_x: *mut f64,
    best_f: *mut f64,
) -> AqStatus {
    guard(|| {
        let Some(f) = fitness else {
            return usage("fitness callback is null");
        };
        let (lo, hi) = (slice(lower, dim, "lower")?, slice(upper, dim, "upper")?);
        let space = SearchSpace::new(
            lo.iter()
                .zip(hi)
                .enumerate()
                .map(|(i, (&l, &h))| aqcast::uammo::Dim::continuous(format!("x{i}"), l, h))
                .collect(),
        )?;
        let config: OptimizerConfig = json_or_default(config_json, "config_json")?;
        let r = optimize(|x: &[f64]| Ok(f(x.as_ptr(), x.len(), user_data)), &space, &config)?;
        slice_mut(best_x, dim, "best_x")?.copy_from_slice(&r.best_position);
        if let Some(b) = best_f.as_mut() {
            *b = r.best_fitness;
        }
        Ok(())
    })
}

/// Full forecast pipeline over `n_inputs` CSV paths, writing artifacts to
/// `out_dir`. `config_path` (TOML) may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn aq_forecast_run(
    config_path: *const c_char,
    inputs: *const *const c_char,
    n_inputs: usize,
    out_dir: *const c_char,
    out: *mut AqMetrics,
) -> AqStatus {
    guard(|| {
        let mut config = match string(config_path, "config_path")? {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        config.out_dir = PathBuf::from(required(out_dir, "out_dir")?);
        if n_inputs == 0 || inputs.is_null() {
            return usage("no input files");
        }
        let paths = std::slice::from_raw_parts(inputs, n_inputs)
            .iter()
            .map(|&p| required(p, "input path").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        let frame = pipeline::prepare_frame(&config, &paths)?;
        let mut run = pipeline::run_forecast(&config, &frame)?;
        run.write(&config.out_dir)?;
        if let Some(o) = out.as_mut() {
            *o = AqMetrics::from(&run.report.metrics);
        }
        Ok(())
    })
}
