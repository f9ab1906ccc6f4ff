//! ARIMA(p, d, q) estimation by conditional sum of squares.
//!
//! The differenced series `w = Δ^d y` follows
//! `w_t = c + Σ φ_i w_{t-i} + e_t + Σ θ_j e_{t-j}`. Innovations are computed
//! recursively from `t = p` with pre-sample innovations set to zero; the
//! objective is `Σ e_t²`, minimized by Nelder–Mead from a least-squares AR
//! warm start.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, solve_linear, NelderMeadOptions};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// Default orders per pollutant (NOx, CO, O3, PM2.5); `None` for others.
    pub fn for_pollutant(name: &str) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "nox" => Some(Self::new(2, 0, 3)),
            "co" => Some(Self::new(5, 0, 0)),
            "o3" | "ozone" => Some(Self::new(2, 0, 1)),
            "pm25" => Some(Self::new(1, 0, 4)),
            _ => None,
        }
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

impl std::str::FromStr for ArimaOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(str::trim)
            .collect();
        let parsed: Vec<usize> = parts
            .iter()
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad ARIMA order `{s}`, expected p,d,q")))?;
        match parsed[..] {
            [p, d, q] => Ok(Self::new(p, d, q)),
            _ => Err(Error::Config(format!("bad ARIMA order `{s}`, expected p,d,q"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    /// Last `p` values of the differenced training series.
    pub tail_diffed: Vec<f64>,
    /// Last `q` in-sample innovations.
    pub tail_resid: Vec<f64>,
    /// Last `d` undifferenced training values.
    pub tail_levels: Vec<f64>,
    pub n_obs: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ_{k=1..d} (-1)^k C(d,k) y_{t-k}` given the last `d` values (oldest
/// first), i.e. `Δ^d y_t - y_t`.
fn lag_polynomial(levels: &[f64], d: usize) -> f64 {
    let n = levels.len();
    (1..=d)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(d, k) * levels[n - k]
        })
        .sum()
}

/// `d`-fold first difference of raw values.
pub fn difference_values(y: &[f64], d: usize) -> Result<Vec<f64>> {
    if y.len() <= d {
        return Err(Error::TooShort {
            what: "differencing",
            needed: d + 1,
            got: y.len(),
        });
    }
    let mut w = y.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    Ok(w)
}

pub fn difference(series: &TimeSeries, d: usize) -> Result<TimeSeries> {
    let w = difference_values(&series.values, d)?;
    Ok(TimeSeries::new(
        format!("{}_d{d}", series.name),
        series.timestamp(d),
        series.step_hours,
        w,
    ))
}

/// Invert `d`-fold differencing given the `d` values preceding the
/// differenced data (oldest first).
pub fn integrate(diffed: &[f64], initial: &[f64]) -> Vec<f64> {
    let d = initial.len();
    let mut levels = initial.to_vec();
    let mut out = Vec::with_capacity(diffed.len());
    for &w in diffed {
        let y = w - lag_polynomial(&levels, d);
        out.push(y);
        if d > 0 {
            levels.remove(0);
            levels.push(y);
        }
    }
    out
}

/// Innovations of an ARMA with intercept on `w`; pre-sample innovations are
/// zero and the recursion starts at `t = p`.
fn innovations(w: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = c;
        for (i, ph) in phi.iter().enumerate() {
            pred += ph * w[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn css(w: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let e = innovations(w, c, phi, theta);
    let s: f64 = e[phi.len()..].iter().map(|v| v * v).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Least-squares AR(p) with intercept; falls back to the mean with zero
/// coefficients when the regressors are collinear.
fn ols_ar(w: &[f64], p: usize) -> (f64, Vec<f64>) {
    let mean = crate::series::mean(w);
    if p == 0 {
        return (mean, Vec::new());
    }
    let k = p + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for t in p..w.len() {
        row[0] = 1.0;
        for i in 0..p {
            row[i + 1] = w[t - 1 - i];
        }
        for a in 0..k {
            xty[a] += row[a] * w[t];
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    // A vanishing ridge on the lag block picks the minimum-norm solution
    // when lags are collinear (e.g. a noise-free periodic input) and is
    // negligible otherwise.
    let ridge = 1e-10 * (1..k).map(|a| xtx[a][a]).sum::<f64>() / p as f64;
    for a in 1..k {
        xtx[a][a] += ridge;
    }
    match solve_linear(xtx, xty) {
        Some(beta) => (beta[0], beta[1..].to_vec()),
        None => (mean, vec![0.0; p]),
    }
}

/// True when all roots of `1 - Σ a_i z^i` lie outside the unit circle,
/// checked through the partial autocorrelations of the step-down recursion.
pub fn is_stationary(ar: &[f64]) -> bool {
    let mut a = ar.to_vec();
    while let Some(&last) = a.last() {
        if last == 0.0 {
            a.pop();
        } else {
            break;
        }
    }
    for k in (1..=a.len()).rev() {
        let r = a[k - 1];
        if r.abs() >= 1.0 {
            return false;
        }
        let denom = 1.0 - r * r;
        let prev: Vec<f64> = (0..k - 1).map(|i| (a[i] + r * a[k - 2 - i]) / denom).collect();
        a = prev;
    }
    true
}

pub fn is_invertible(ma: &[f64]) -> bool {
    let neg: Vec<f64> = ma.iter().map(|v| -v).collect();
    is_stationary(&neg)
}

/// Estimate an ARIMA model by CSS.
pub fn fit(series: &TimeSeries, order: ArimaOrder) -> Result<ArimaModel> {
    fit_values(&series.values, order)
}

pub fn fit_values(y: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    if y.len() <= p + q + d {
        return Err(Error::TooShort {
            what: "ARIMA fit",
            needed: p + q + d + 1,
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite observation at index {i}")));
    }
    if y.len() < 10 * (p + q + 1) {
        log::warn!(
            "ARIMA{order}: {} observations is fewer than the recommended {}",
            y.len(),
            10 * (p + q + 1)
        );
    }
    let w = difference_values(y, d)?;
    let (c0, phi0) = ols_ar(&w, p);
    let mut x0 = vec![c0];
    x0.extend(&phi0);
    x0.extend(std::iter::repeat_n(0.0, q));

    let objective = |x: &[f64]| css(&w, x[0], &x[1..=p], &x[1 + p..]);
    let f0 = objective(&x0);
    if !f0.is_finite() {
        return Err(Error::Numerical(format!(
            "ARIMA{order}: non-finite CSS at the warm start"
        )));
    }
    let spread = crate::series::std_dev(&w);
    let mut step = vec![0.1 * c0.abs().max(0.1 * spread).max(1e-3)];
    step.extend(std::iter::repeat_n(0.1, p + q));
    let best = if q == 0 && x0.iter().all(|v| v.is_finite()) {
        // Without MA terms CSS is the least-squares objective over t >= p,
        // so the warm start is already its minimizer.
        crate::optim::Minimum {
            x: x0,
            fx: f0,
            evals: 1,
        }
    } else {
        nelder_mead(objective, &x0, &step, &NelderMeadOptions::default())
    };
    if !best.fx.is_finite() || best.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "ARIMA{order}: CSS search produced a non-finite objective"
        )));
    }
    let intercept = best.x[0];
    let phi = best.x[1..=p].to_vec();
    let theta = best.x[1 + p..].to_vec();
    let e = innovations(&w, intercept, &phi, &theta);
    let effective = w.len() - p;
    let sigma2 = best.fx / effective as f64;
    if !is_stationary(&phi) {
        log::warn!("ARIMA{order}: fitted AR polynomial is not stationary (phi = {phi:?})");
    }
    if !is_invertible(&theta) {
        log::warn!("ARIMA{order}: fitted MA polynomial is not invertible (theta = {theta:?})");
    }
    Ok(ArimaModel {
        order,
        tail_diffed: w[w.len() - p..].to_vec(),
        tail_resid: e[e.len() - q..].to_vec(),
        tail_levels: y[y.len() - d..].to_vec(),
        phi,
        theta,
        intercept,
        sigma2: sigma2.max(0.0),
        n_obs: y.len(),
    })
}

/// Recursive one-step predictor positioned just after the training data.
/// Feed realized observations with [`ArimaFilter::observe`].
#[derive(Debug, Clone)]
pub struct ArimaFilter<'a> {
    model: &'a ArimaModel,
    diffed: Vec<f64>,
    resid: Vec<f64>,
    levels: Vec<f64>,
}

impl<'a> ArimaFilter<'a> {
    fn diffed_prediction(&self) -> f64 {
        let m = self.model;
        let mut w = m.intercept;
        let nd = self.diffed.len();
        for (i, ph) in m.phi.iter().enumerate() {
            w += ph * self.diffed[nd - 1 - i];
        }
        let nr = self.resid.len();
        for (j, th) in m.theta.iter().enumerate() {
            w += th * self.resid[nr - 1 - j];
        }
        w
    }

    /// Expected next observation on the original scale.
    pub fn predict_next(&self) -> f64 {
        self.diffed_prediction() - lag_polynomial(&self.levels, self.model.order.d)
    }

    pub fn observe(&mut self, y: f64) {
        let d = self.model.order.d;
        let w = y + lag_polynomial(&self.levels, d);
        let e = w - self.diffed_prediction();
        push_window(&mut self.diffed, w);
        push_window(&mut self.resid, e);
        push_window(&mut self.levels, y);
    }
}

fn push_window(buf: &mut Vec<f64>, v: f64) {
    if !buf.is_empty() {
        buf.remove(0);
        buf.push(v);
    }
}

impl ArimaModel {
    pub fn filter(&self) -> ArimaFilter<'_> {
        ArimaFilter {
            model: self,
            diffed: self.tail_diffed.clone(),
            resid: self.tail_resid.clone(),
            levels: self.tail_levels.clone(),
        }
    }

    /// Iterated one-step expectations with future innovations set to zero.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let mut f = self.filter();
        (0..horizon)
            .map(|_| {
                let y = f.predict_next();
                f.observe(y);
                y
            })
            .collect()
    }

    /// Forecast placed on the calendar right after `history`.
    pub fn forecast_after(&self, history: &TimeSeries, horizon: usize) -> TimeSeries {
        history.continuation(format!("{}_forecast", history.name), self.forecast(horizon))
    }

    /// One-step-ahead predictions for each of `actuals`, each made from the
    /// realized values before it.
    pub fn rolling_one_step(&self, actuals: &[f64]) -> Vec<f64> {
        let mut f = self.filter();
        actuals
            .iter()
            .map(|&y| {
                let pred = f.predict_next();
                f.observe(y);
                pred
            })
            .collect()
    }

    /// Process mean of the stationary part, `c / (1 - Σφ)`.
    pub fn mean(&self) -> f64 {
        let s: f64 = self.phi.iter().sum();
        if (1.0 - s).abs() < 1e-12 {
            0.0
        } else {
            self.intercept / (1.0 - s)
        }
    }

    pub fn is_stationary(&self) -> bool {
        is_stationary(&self.phi)
    }

    /// Model with the given coefficients and no training history: the
    /// pre-sample state sits at the process mean with zero innovations.
    pub fn from_coefficients(
        order: ArimaOrder,
        intercept: f64,
        phi: Vec<f64>,
        theta: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        if phi.len() != order.p || theta.len() != order.q {
            return Err(Error::invalid(format!(
                "ARIMA{order} needs {} AR and {} MA coefficients",
                order.p, order.q
            )));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::invalid("sigma2 must be non-negative"));
        }
        let mut m = ArimaModel {
            order,
            phi,
            theta,
            intercept,
            sigma2,
            tail_diffed: Vec::new(),
            tail_resid: vec![0.0; order.q],
            tail_levels: vec![0.0; order.d],
            n_obs: 0,
        };
        m.tail_diffed = vec![m.mean(); order.p];
        Ok(m)
    }

    /// Replace the forecasting state with the given recent history.
    pub fn with_history(mut self, y: &[f64]) -> Result<Self> {
        let ArimaOrder { p, d, q } = self.order;
        let w = difference_values(y, d)?;
        if w.len() < p {
            return Err(Error::TooShort {
                what: "ARIMA history",
                needed: p + d,
                got: y.len(),
            });
        }
        let e = innovations(&w, self.intercept, &self.phi, &self.theta);
        self.tail_diffed = w[w.len() - p..].to_vec();
        self.tail_resid = if e.len() >= q {
            e[e.len() - q..].to_vec()
        } else {
            vec![0.0; q]
        };
        self.tail_levels = y[y.len() - d..].to_vec();
        self.n_obs = y.len();
        Ok(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ArimaModel = serde_json::from_str(&text)?;
        let o = m.order;
        if m.phi.len() != o.p
            || m.theta.len() != o.q
            || m.tail_diffed.len() != o.p
            || m.tail_resid.len() != o.q
            || m.tail_levels.len() != o.d
        {
            return Err(Error::invalid(format!(
                "{}: coefficient counts do not match order {o}",
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Simulate `n` points with Gaussian innovations of variance `sigma2`. The
/// ARMA part starts at its mean and runs a burn-in before recording; `d > 0`
/// integrates from zero.
pub fn simulate(model: &ArimaModel, n: usize, seed: u64) -> Vec<f64> {
    const BURN_IN: usize = 500;
    let ArimaOrder { p, d, q } = model.order;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = model.sigma2.max(0.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mu = model.mean();
    let total = n + BURN_IN;
    let mut w = vec![mu; p];
    let mut e = vec![0.0; q];
    let mut out = Vec::with_capacity(n);
    for t in 0..total {
        let eps = sd * normal.sample(&mut rng);
        let mut v = model.intercept + eps;
        for (i, ph) in model.phi.iter().enumerate() {
            v += ph * w[w.len() - 1 - i];
        }
        for (j, th) in model.theta.iter().enumerate() {
            v += th * e[e.len() - 1 - j];
        }
        push_window(&mut w, v);
        push_window(&mut e, eps);
        if t >= BURN_IN {
            out.push(v);
        }
    }
    if d > 0 {
        integrate(&out, &vec![0.0; d])
    } else {
        out
    }
}

pub fn simulate_series(model: &ArimaModel, n: usize, seed: u64) -> TimeSeries {
    TimeSeries::hourly("simulated", simulate(model, n, seed))
}
