use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamp format used for every CSV this crate writes.
pub const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// A uniformly sampled series. `step_hours` is the sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub start: NaiveDateTime,
    pub step_hours: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, start: NaiveDateTime, step_hours: i64, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            start,
            step_hours,
            values,
        }
    }

    /// Hourly series starting at 2021-01-04 00:00 (a Monday). Handy for
    /// synthetic data where the calendar does not matter.
    pub fn hourly(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self::new(name, default_start(), 1, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> Duration {
        Duration::hours(self.step_hours)
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::hours(self.step_hours * i as i64)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        (0..self.len()).map(|i| self.timestamp(i))
    }

    /// Sub-series over `range`, keeping the calendar aligned.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            name: self.name.clone(),
            start: self.timestamp(range.start),
            step_hours: self.step_hours,
            values: self.values[range].to_vec(),
        }
    }

    /// Same calendar, new values.
    pub fn with_values(&self, name: impl Into<String>, values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            name: name.into(),
            start: self.start,
            step_hours: self.step_hours,
            values,
        }
    }

    /// Series of `len` points immediately following this one.
    pub fn continuation(&self, name: impl Into<String>, values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            name: name.into(),
            start: self.timestamp(self.len()),
            step_hours: self.step_hours,
            values,
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::invalid(format!(
                "series `{}` has a non-finite value at index {i}",
                self.name
            ))),
            None => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

pub(crate) fn default_start() -> NaiveDateTime {
    chrono::NaiveDate::from_ymd_opt(2021, 1, 4)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
