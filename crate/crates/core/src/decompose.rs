//! LOESS smoothing and STL-style additive decomposition.
//!
//! `y = trend + seasonal + residual`, with the residual defined by
//! subtraction so the identity holds to rounding error for every input.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoessConfig {
    /// Fraction of the series inside each local window, in (0, 1].
    pub span: f64,
    /// Local polynomial degree: 0, 1 or 2.
    pub degree: usize,
    /// Bisquare reweighting passes after the initial fit.
    pub robustness_iters: usize,
}

impl Default for LoessConfig {
    fn default() -> Self {
        Self {
            span: 0.25,
            degree: 1,
            robustness_iters: 1,
        }
    }
}

impl LoessConfig {
    pub fn new(span: f64, degree: usize, robustness_iters: usize) -> Self {
        Self {
            span,
            degree,
            robustness_iters,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(Error::invalid(format!("LOESS span {} outside (0, 1]", self.span)));
        }
        if self.degree > 2 {
            return Err(Error::invalid(format!("LOESS degree {} > 2", self.degree)));
        }
        if self.span * (len as f64) < (self.degree + 1) as f64 {
            return Err(Error::invalid(format!(
                "LOESS window of {:.1} points too small for degree {}",
                self.span * len as f64,
                self.degree
            )));
        }
        Ok(())
    }

    /// Neighbourhood size for a series of `len` points.
    fn window(&self, len: usize) -> usize {
        ((self.span * len as f64).ceil() as usize).clamp(self.degree + 1, len)
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

/// Solve the small dense system `a x = b` in place by Gaussian elimination
/// with partial pivoting. Returns `None` when a pivot collapses.
fn solve_small(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], n: usize) -> Option<()> {
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * b[k];
        }
        b[row] = s / a[row][row];
    }
    Some(())
}

/// Weighted local polynomial estimate at `center` over `[lo, hi)`.
fn local_fit(y: &[f64], robust: Option<&[f64]>, center: usize, lo: usize, hi: usize, degree: usize) -> f64 {
    let h = (center - lo).max(hi - 1 - center) as f64;
    let mut weights = Vec::with_capacity(hi - lo);
    for j in lo..hi {
        let dist = (j as f64 - center as f64).abs();
        let mut w = if h > 0.0 { tricube(dist / h) } else { 1.0 };
        if let Some(r) = robust {
            w *= r[j];
        }
        weights.push(w);
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return y[center];
    }
    let hs = if h > 0.0 { h } else { 1.0 };
    let mut deg = degree;
    loop {
        let m = deg + 1;
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (k, j) in (lo..hi).enumerate() {
            let w = weights[k];
            if w == 0.0 {
                continue;
            }
            let x = (j as f64 - center as f64) / hs;
            let pows = [1.0, x, x * x];
            for r in 0..m {
                b[r] += w * pows[r] * y[j];
                for c in 0..m {
                    a[r][c] += w * pows[r] * pows[c];
                }
            }
        }
        if solve_small(&mut a, &mut b, m).is_some() {
            return b[0];
        }
        if deg == 0 {
            return y[center];
        }
        deg -= 1;
    }
}

/// One LOESS pass with neighbourhood size `q`. Windows are the `q` nearest
/// indices, shifted inward at the ends rather than padded.
fn smooth_pass(y: &[f64], robust: Option<&[f64]>, q: usize, degree: usize) -> Vec<f64> {
    let n = y.len();
    let q = q.clamp(1, n);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub((q - 1) / 2).min(n - q);
            local_fit(y, robust, i, lo, lo + q, degree)
        })
        .collect()
}

/// Bisquare robustness weights from residuals, scaled by six times the
/// median absolute residual. An essentially exact fit (median below
/// `1e-10 × scale`) keeps unit weights.
fn robustness_weights(residuals: &[f64], scale: f64) -> Vec<f64> {
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    let h = 6.0 * median;
    if h <= 1e-10 * scale {
        return vec![1.0; residuals.len()];
    }
    residuals.iter().map(|r| bisquare(r.abs() / h)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// LOESS over raw values; the slice-level counterpart of [`loess_smooth`].
pub fn loess(values: &[f64], cfg: &LoessConfig) -> Result<Vec<f64>> {
    if values.len() < 3 {
        return Err(Error::TooShort {
            what: "LOESS",
            needed: 3,
            got: values.len(),
        });
    }
    cfg.validate(values.len())?;
    let q = cfg.window(values.len());
    let mut fit = smooth_pass(values, None, q, cfg.degree);
    for _ in 0..cfg.robustness_iters {
        let resid: Vec<f64> = values.iter().zip(&fit).map(|(y, f)| y - f).collect();
        let w = robustness_weights(&resid, max_abs(values));
        fit = smooth_pass(values, Some(&w), q, cfg.degree);
    }
    Ok(fit)
}

pub fn loess_smooth(series: &TimeSeries, cfg: &LoessConfig) -> Result<TimeSeries> {
    let fit = loess(&series.values, cfg)?;
    Ok(series.with_values(format!("{}_loess", series.name), fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlConfig {
    /// Seasonal period in samples.
    pub period: usize,
    /// Span of the cycle-subseries smoother (fraction of each subseries).
    pub seasonal_span: f64,
    /// Span of the trend smoother (fraction of the whole series).
    pub trend_span: f64,
    pub degree: usize,
    pub inner_iters: usize,
    /// Robustness passes: each recomputes bisquare weights from the current
    /// residual and reruns the inner loop.
    pub outer_iters: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self {
            period: 24,
            seasonal_span: 0.75,
            trend_span: 0.25,
            degree: 1,
            inner_iters: 2,
            outer_iters: 1,
        }
    }
}

impl StlConfig {
    pub fn with_period(period: usize) -> Self {
        Self {
            period,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedSeries {
    pub trend: TimeSeries,
    pub seasonal: TimeSeries,
    pub residual: TimeSeries,
    pub period: usize,
}

impl DecomposedSeries {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.trend.values[i] + self.seasonal.values[i] + self.residual.values[i])
            .collect()
    }

    /// `timestamp,trend,seasonal,residual` dump.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        crate::ingest::write_series_csv(&[&self.trend, &self.seasonal, &self.residual], writer)
    }
}

fn subseries_window(span: f64, len: usize, degree: usize) -> usize {
    ((span * len as f64).ceil() as usize).clamp((degree + 1).min(len), len)
}

/// Remove the mean of every full cycle; a trailing partial cycle has the
/// mean of the last `period` values removed.
fn center_cycles(c: &mut [f64], period: usize) {
    let n = c.len();
    let full = n / period;
    for k in 0..full {
        let block = &mut c[k * period..(k + 1) * period];
        let m = block.iter().sum::<f64>() / period as f64;
        block.iter_mut().for_each(|v| *v -= m);
    }
    if full * period < n {
        let m = c[n - period..].iter().sum::<f64>() / period as f64;
        c[full * period..].iter_mut().for_each(|v| *v -= m);
    }
}

/// STL-style decomposition: alternate cycle-subseries smoothing of the
/// detrended series and LOESS smoothing of the deseasonalized series.
pub fn stl_decompose(series: &TimeSeries, cfg: &StlConfig) -> Result<DecomposedSeries> {
    let period = cfg.period;
    if period < 2 {
        return Err(Error::invalid(format!("period {period} < 2")));
    }
    let n = series.len();
    if n < 2 * period {
        return Err(Error::TooShort {
            what: "decomposition",
            needed: 2 * period,
            got: n,
        });
    }
    series.ensure_finite()?;
    LoessConfig::new(cfg.trend_span, cfg.degree, 0).validate(n)?;
    if !(cfg.seasonal_span > 0.0 && cfg.seasonal_span <= 1.0) {
        return Err(Error::invalid(format!(
            "seasonal span {} outside (0, 1]",
            cfg.seasonal_span
        )));
    }
    let y = &series.values;
    let trend_q = LoessConfig::new(cfg.trend_span, cfg.degree, 0).window(n);

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robust: Option<Vec<f64>> = None;
    let mut sub_y = Vec::with_capacity(n / period + 1);
    let mut sub_w = Vec::with_capacity(n / period + 1);

    for pass in 0..=cfg.outer_iters {
        for _ in 0..cfg.inner_iters.max(1) {
            let detrended: Vec<f64> = y.iter().zip(&trend).map(|(a, b)| a - b).collect();
            let mut cycle = vec![0.0; n];
            for phase in 0..period {
                sub_y.clear();
                sub_w.clear();
                for i in (phase..n).step_by(period) {
                    sub_y.push(detrended[i]);
                    if let Some(w) = &robust {
                        sub_w.push(w[i]);
                    }
                }
                let q = subseries_window(cfg.seasonal_span, sub_y.len(), cfg.degree);
                let weights = robust.as_ref().map(|_| sub_w.as_slice());
                let fit = smooth_pass(&sub_y, weights, q, cfg.degree);
                for (k, i) in (phase..n).step_by(period).enumerate() {
                    cycle[i] = fit[k];
                }
            }
            center_cycles(&mut cycle, period);
            seasonal = cycle;
            let deseason: Vec<f64> = y.iter().zip(&seasonal).map(|(a, b)| a - b).collect();
            trend = smooth_pass(&deseason, robust.as_deref(), trend_q, cfg.degree);
        }
        if pass < cfg.outer_iters {
            let resid: Vec<f64> = (0..n).map(|i| y[i] - trend[i] - seasonal[i]).collect();
            robust = Some(robustness_weights(&resid, max_abs(y)));
        }
    }
    let residual: Vec<f64> = (0..n).map(|i| y[i] - trend[i] - seasonal[i]).collect();
    Ok(DecomposedSeries {
        trend: series.with_values("trend", trend),
        seasonal: series.with_values("seasonal", seasonal),
        residual: series.with_values("residual", residual),
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::hourly("y", v)
    }

    #[test]
    fn constant_is_fixed_point() {
        for degree in 0..=2 {
            let s = ts(vec![4.2; 50]);
            let out = loess_smooth(&s, &LoessConfig::new(0.3, degree, 2)).unwrap();
            assert!(out.values.iter().all(|v| (v - 4.2).abs() < 1e-12));
        }
    }

    #[test]
    fn lines_are_reproduced() {
        let line: Vec<f64> = (0..200).map(|t| -3.0 + 0.37 * t as f64).collect();
        for degree in 1..=2 {
            for span in [0.05, 0.3, 1.0] {
                let out = loess(&line, &LoessConfig::new(span, degree, 1)).unwrap();
                let err = out.iter().zip(&line).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-8, "degree {degree} span {span}: {err}");
            }
        }
    }

    #[test]
    fn smoothing_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = (0..300)
            .map(|t| (2.0 * PI * t as f64 / 50.0).sin() + rng.random_range(-0.5..0.5))
            .collect();
        let out = loess(&y, &LoessConfig::new(0.3, 1, 1)).unwrap();
        let var = |v: &[f64]| crate::series::std_dev(v).powi(2);
        assert!(var(&out) < var(&y));
    }

    #[test]
    fn window_too_small() {
        assert!(loess(&[1.0, 2.0, 3.0, 4.0], &LoessConfig::new(0.25, 2, 0)).is_err());
        assert!(loess(&[1.0, 2.0], &LoessConfig::default()).is_err());
        assert!(loess(&[1.0; 10], &LoessConfig::new(0.0, 1, 0)).is_err());
    }

    #[test]
    fn sine_decomposition() {
        let y: Vec<f64> = (0..240).map(|t| 10.0 + (2.0 * PI * t as f64 / 24.0).sin()).collect();
        let d = stl_decompose(&ts(y), &StlConfig::with_period(24)).unwrap();
        assert!(d.trend.values.iter().all(|t| (t - 10.0).abs() <= 0.05));
        assert!(crate::series::std_dev(&d.residual.values) <= 0.05);
    }

    #[test]
    fn constant_decomposition() {
        let d = stl_decompose(&ts(vec![3.0; 96]), &StlConfig::with_period(24)).unwrap();
        assert!(d.trend.values.iter().all(|t| (t - 3.0).abs() < 1e-9));
        assert!(d.seasonal.values.iter().all(|s| s.abs() < 1e-9));
        assert!(d.residual.values.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn ramp_has_no_seasonality() {
        let y: Vec<f64> = (0..480).map(|t| 0.05 * t as f64).collect();
        let range = 0.05 * 479.0;
        let d = stl_decompose(&ts(y), &StlConfig::with_period(24)).unwrap();
        let max = d.seasonal.values.iter().map(|s| s.abs()).fold(0.0, f64::max);
        assert!(max <= 0.01 * range, "{max} vs {range}");
    }

    #[test]
    fn seasonal_is_periodic_and_centered() {
        let y: Vec<f64> = (0..480)
            .map(|t| {
                let p = 2.0 * PI * t as f64 / 24.0;
                5.0 + 0.02 * t as f64 + 3.0 * p.sin() + (2.0 * p).cos()
            })
            .collect();
        let d = stl_decompose(&ts(y.clone()), &StlConfig::with_period(24)).unwrap();
        let s = &d.seasonal.values;
        let a = &s[..s.len() - 24];
        let b = &s[24..];
        let (ma, mb) = (crate::series::mean(a), crate::series::mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let corr = cov
            / (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt()
                * b.iter().map(|y| (y - mb).powi(2)).sum::<f64>().sqrt());
        assert!(corr >= 0.99, "{corr}");
        let sd = crate::series::std_dev(&y);
        for block in s.chunks_exact(24) {
            assert!(crate::series::mean(block).abs() <= 1e-6 * sd);
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(stl_decompose(&ts(vec![1.0; 47]), &StlConfig::with_period(24)).is_err());
        assert!(stl_decompose(&ts(vec![1.0; 47]), &StlConfig::with_period(1)).is_err());
    }

    #[test]
    fn partial_last_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let d = stl_decompose(&ts(y.clone()), &StlConfig::with_period(24)).unwrap();
        for (a, b) in d.reconstruct().iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12 * 10.0);
        }
    }
}
