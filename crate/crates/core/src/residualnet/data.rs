use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Standardization fitted on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn identity() -> Self {
        Scaler { mean: 0.0, std: 1.0 }
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Sliding `(window, next value)` pairs, already standardized.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    pub window: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub scaler: Scaler,
    /// Training data had (numerically) zero spread.
    pub degenerate: bool,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn pairs(&self, range: Range<usize>) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        range.map(move |i| (self.inputs[i].as_slice(), self.targets[i]))
    }

    pub fn train_pairs(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        self.pairs(self.train.clone())
    }

    pub fn val_pairs(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        self.pairs(self.val.clone())
    }

    /// Variance of the scaled validation targets (the mean predictor's MSE
    /// around their own mean).
    pub fn val_target_variance(&self) -> f64 {
        let t = &self.targets[self.val.clone()];
        crate::series::std_dev(t).powi(2)
    }
}

/// Stride-1 windows. Window `k` covers `[k + 1, k + 1 + window)` and targets
/// the next point, so every window has an observed predecessor; a series of
/// length `n` gives `n - window - 1` pairs. The last
/// `ceil(val_fraction · pairs)` pairs form the validation split, and the
/// scaler is fitted on the points touched by training pairs only.
pub fn make_windows(residual: &TimeSeries, window: usize, val_fraction: f64) -> Result<WindowDataset> {
    make_windows_from(&residual.values, window, val_fraction)
}

pub fn make_windows_from(values: &[f64], window: usize, val_fraction: f64) -> Result<WindowDataset> {
    let n = values.len();
    if window == 0 {
        return Err(Error::invalid("window must be positive"));
    }
    if n <= window + 1 + 1 {
        return Err(Error::TooShort {
            what: "residual windows",
            needed: window + 3,
            got: n,
        });
    }
    if !(val_fraction > 0.0 && val_fraction < 0.5) {
        return Err(Error::invalid(format!(
            "validation fraction {val_fraction} outside (0, 0.5)"
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite residual at index {i}")));
    }
    let count = n - window - 1;
    let n_val = ((val_fraction * count as f64).ceil() as usize).clamp(1, count - 1);
    let n_train = count - n_val;
    // Training pairs touch indices 1 ..= n_train + window.
    let train_span = &values[1..=n_train + window];
    let mean = crate::series::mean(train_span);
    let std = crate::series::std_dev(train_span);
    let scale_ref = train_span.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let degenerate = std <= 1e-9 * scale_ref;
    let scaler = Scaler {
        mean,
        std: if degenerate { 1.0 } else { std },
    };
    let scaled: Vec<f64> = values.iter().map(|&v| scaler.scale(v)).collect();
    let inputs = (0..count).map(|k| scaled[k + 1..k + 1 + window].to_vec()).collect();
    let targets = (0..count).map(|k| scaled[k + 1 + window]).collect();
    Ok(WindowDataset {
        window,
        inputs,
        targets,
        train: 0..n_train,
        val: n_train..count,
        scaler,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_split() {
        let s = TimeSeries::hourly("r", (0..100).map(|i| (i as f64 * 0.3).sin()).collect());
        let d = make_windows(&s, 24, 0.2).unwrap();
        assert_eq!(d.len(), 75);
        assert_eq!(d.val, 60..75);
        assert_eq!(d.train, 0..60);
        assert!(!d.degenerate);
        assert!(d.inputs.iter().all(|w| w.len() == 24));
        // last training target precedes every validation target
        let last_train_target_idx = d.train.end - 1 + 1 + 24;
        let first_val_target_idx = d.val.start + 1 + 24;
        assert!(last_train_target_idx < first_val_target_idx);
    }

    #[test]
    fn training_stats_only() {
        let mut v: Vec<f64> = (0..60).map(|i| (i % 2) as f64).collect();
        v.extend(std::iter::repeat_n(100.0, 20));
        let d = make_windows_from(&v, 4, 0.3).unwrap();
        assert!(d.scaler.mean < 2.0, "{:?}", d.scaler);
    }

    #[test]
    fn constant_is_degenerate() {
        let s = TimeSeries::hourly("r", vec![3.0; 50]);
        let d = make_windows(&s, 8, 0.2).unwrap();
        assert!(d.degenerate);
        assert!(d.inputs.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let s = TimeSeries::hourly("r", vec![1.0; 10]);
        assert!(make_windows(&s, 8, 0.2).is_err());
        let s = TimeSeries::hourly("r", vec![1.0; 100]);
        assert!(make_windows(&s, 8, 0.5).is_err());
        assert!(make_windows(&s, 8, 0.0).is_err());
    }
}
