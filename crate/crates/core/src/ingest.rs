//! Raw monitoring CSV ingestion and cleaning.
//!
//! The cleaning chain is `load_csv` → [`concat`] → [`resample_hourly`] →
//! [`merge_duplicate_columns`] → [`drop_sparse_columns`] → [`impute`], after
//! which single columns are pulled out as [`TimeSeries`] and optionally
//! winsorized with [`remove_outliers`]. Winsorizing runs after imputation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, ISO_FORMAT};

pub const FROM_DATE: &str = "From Date";
pub const TO_DATE: &str = "To Date";
/// Header written by [`write_csv`]; accepted on input in place of `From Date`.
pub const TIMESTAMP: &str = "timestamp";
pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 0.6;
pub const DEFAULT_IQR_MULTIPLIER: f64 = 1.5;
/// Lag of the "same hour one year ago" feature, in steps.
pub const YEAR_LAG_STEPS: usize = 365 * 24;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub timestamp: NaiveDateTime,
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<RawRow>,
    pub source_id: String,
}

impl RawTable {
    pub fn column(&self, idx: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r.cells[idx])
    }

    /// Index of a column by exact name, falling back to the normalized base
    /// name (`PM2.5` finds `PM2.5 (ug/m3)`).
    pub fn find_column(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name).or_else(|| {
            let key = normalize_name(name);
            self.column_names.iter().position(|c| normalize_name(c) == key)
        })
    }

    pub fn presence(&self, idx: usize) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.column(idx).filter(Option::is_some).count() as f64 / self.rows.len() as f64
    }

    /// Extract one fully imputed column on a uniform grid.
    pub fn to_series(&self, name: &str) -> Result<TimeSeries> {
        let idx = self
            .find_column(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        let first = self.rows.first().ok_or(Error::TooShort {
            what: "table",
            needed: 1,
            got: 0,
        })?;
        let step = match self.rows.get(1) {
            Some(r) => r.timestamp - first.timestamp,
            None => Duration::hours(1),
        };
        if step.num_seconds() <= 0 || step.num_seconds() % 3600 != 0 {
            return Err(Error::invalid("series step is not a whole number of hours"));
        }
        let mut values = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.timestamp != first.timestamp + step * i as i32 {
                return Err(Error::invalid(format!(
                    "row {} breaks the uniform {}h grid; resample first",
                    i + 1,
                    step.num_hours()
                )));
            }
            match row.cells[idx] {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::invalid(format!(
                        "column `{}` has a missing cell at row {}; impute first",
                        self.column_names[idx],
                        i + 1
                    )))
                }
            }
        }
        Ok(TimeSeries::new(
            self.column_names[idx].clone(),
            first.timestamp,
            step.num_hours(),
            values,
        ))
    }
}

/// Parse `DD-MM-YYYY HH:MM[:SS]` or an ISO-8601 date-time.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 8] = [
        "%d-%m-%Y %H:%M",
        "%d-%m-%Y %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| chrono::DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))
        .or_else(|| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty()
        || ["na", "nan", "none", "null", "-"]
            .iter()
            .any(|m| t.eq_ignore_ascii_case(m))
    {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("cannot parse `{t}` as a number")),
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path.display().to_string())
}

/// Parse a monitoring CSV. Rows are returned sorted by `From Date`.
pub fn read_csv<R: Read>(reader: R, source_id: impl Into<String>) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::NoHeader);
    }
    let from_idx = headers
        .iter()
        .position(|h| h == FROM_DATE)
        .or_else(|| headers.iter().position(|h| h.eq_ignore_ascii_case(TIMESTAMP)))
        .ok_or_else(|| Error::MissingColumn(FROM_DATE.to_string()))?;
    let to_idx = headers.iter().position(|h| h == TO_DATE);
    let value_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != from_idx && Some(i) != to_idx)
        .collect();
    let column_names = value_idx.iter().map(|&i| headers[i].to_string()).collect();

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Line 1 is the header.
        let line = i + 2;
        let timestamp = parse_timestamp(&rec[from_idx]).ok_or_else(|| Error::Parse {
            row: line,
            message: format!("unparseable timestamp `{}`", &rec[from_idx]),
        })?;
        if let Some(t) = to_idx {
            let to = parse_timestamp(&rec[t]).ok_or_else(|| Error::Parse {
                row: line,
                message: format!("unparseable timestamp `{}`", &rec[t]),
            })?;
            if to < timestamp {
                return Err(Error::Parse {
                    row: line,
                    message: "`To Date` precedes `From Date`".into(),
                });
            }
        }
        let cells = value_idx
            .iter()
            .map(|&c| parse_cell(&rec[c]).map_err(|message| Error::Parse { row: line, message }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(RawRow { timestamp, cells });
    }
    rows.sort_by_key(|r| r.timestamp);
    Ok(RawTable {
        column_names,
        rows,
        source_id: source_id.into(),
    })
}

/// Stack several tables. The output has the union of the column names (in
/// first-seen order); cells a source does not have are missing.
pub fn concat(tables: &[RawTable]) -> RawTable {
    let mut names: Vec<String> = Vec::new();
    for t in tables {
        for n in &t.column_names {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let mut rows = Vec::new();
    for t in tables {
        let map: Vec<usize> = t
            .column_names
            .iter()
            .map(|n| names.iter().position(|m| m == n).unwrap())
            .collect();
        for r in &t.rows {
            let mut cells = vec![None; names.len()];
            for (src, &dst) in map.iter().enumerate() {
                cells[dst] = r.cells[src];
            }
            rows.push(RawRow {
                timestamp: r.timestamp,
                cells,
            });
        }
    }
    rows.sort_by_key(|r| r.timestamp);
    let source_id = tables
        .iter()
        .map(|t| t.source_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    RawTable {
        column_names: names,
        rows,
        source_id,
    }
}

/// Snap rows to the hourly grid by truncating minutes and seconds, average
/// rows landing in the same hour, and insert all-missing rows for absent
/// hours so the result is uniformly spaced.
pub fn resample_hourly(table: &RawTable) -> RawTable {
    let ncol = table.column_names.len();
    let mut buckets: BTreeMap<NaiveDateTime, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for r in &table.rows {
        let hour = r
            .timestamp
            .with_minute(0)
            .and_then(|t| t.with_second(0))
            .and_then(|t| t.with_nanosecond(0))
            .unwrap_or(r.timestamp);
        let (sum, cnt) = buckets.entry(hour).or_insert_with(|| (vec![0.0; ncol], vec![0; ncol]));
        for (c, cell) in r.cells.iter().enumerate() {
            if let Some(v) = cell {
                sum[c] += v;
                cnt[c] += 1;
            }
        }
    }
    let mut rows = Vec::new();
    if let (Some((&first, _)), Some((&last, _))) = (buckets.first_key_value(), buckets.last_key_value()) {
        let mut t = first;
        while t <= last {
            let cells = match buckets.get(&t) {
                Some((sum, cnt)) => sum
                    .iter()
                    .zip(cnt)
                    .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
                    .collect(),
                None => vec![None; ncol],
            };
            rows.push(RawRow { timestamp: t, cells });
            t += Duration::hours(1);
        }
    }
    RawTable {
        column_names: table.column_names.clone(),
        rows,
        source_id: table.source_id.clone(),
    }
}

/// Column name with trailing parenthesised unit groups removed, trimmed and
/// case-folded: `Xylene (ug/m3)` and `Xylene ()` both give `xylene`.
pub fn normalize_name(name: &str) -> String {
    base_name(name).to_lowercase()
}

fn base_name(name: &str) -> &str {
    let mut s = name.trim();
    while s.ends_with(')') {
        match s.rfind('(') {
            Some(open) => s = s[..open].trim_end(),
            None => break,
        }
    }
    s
}

/// Merge columns whose normalized names collide. Per row, present cells
/// are averaged; a row where every source is missing stays missing.
pub fn merge_duplicate_columns(table: &RawTable) -> RawTable {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, name) in table.column_names.iter().enumerate() {
        let key = normalize_name(name);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    if groups.iter().all(|(_, m)| m.len() == 1) {
        return table.clone();
    }
    let column_names = groups
        .iter()
        .map(|(_, m)| {
            let first = &table.column_names[m[0]];
            if m.len() == 1 {
                first.clone()
            } else {
                base_name(first).to_string()
            }
        })
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let cells = groups
                .iter()
                .map(|(_, m)| {
                    let present: Vec<f64> = m.iter().filter_map(|&i| r.cells[i]).collect();
                    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
                })
                .collect();
            RawRow {
                timestamp: r.timestamp,
                cells,
            }
        })
        .collect();
    RawTable {
        column_names,
        rows,
        source_id: table.source_id.clone(),
    }
}

/// Remove columns whose fraction of present cells is below the threshold.
pub fn drop_sparse_columns(table: &RawTable, presence_threshold: f64) -> Result<RawTable> {
    if !(0.0..=1.0).contains(&presence_threshold) {
        return Err(Error::invalid(format!(
            "presence threshold {presence_threshold} outside [0, 1]"
        )));
    }
    let keep: Vec<usize> = (0..table.column_names.len())
        .filter(|&i| table.presence(i) >= presence_threshold)
        .collect();
    for (i, name) in table.column_names.iter().enumerate() {
        if !keep.contains(&i) {
            log::info!(
                "dropping sparse column `{name}` ({:.1}% present)",
                100.0 * table.presence(i)
            );
        }
    }
    Ok(RawTable {
        column_names: keep.iter().map(|&i| table.column_names[i].clone()).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| RawRow {
                timestamp: r.timestamp,
                cells: keep.iter().map(|&i| r.cells[i]).collect(),
            })
            .collect(),
        source_id: table.source_id.clone(),
    })
}

/// Forward-fill each column, then fill leading gaps with the column mean.
pub fn impute(table: &RawTable) -> Result<RawTable> {
    let mut out = table.clone();
    for (c, name) in table.column_names.iter().enumerate() {
        let present: Vec<f64> = table.column(c).flatten().collect();
        if present.is_empty() {
            return Err(Error::EmptyColumn(name.clone()));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let mut last = None;
        for row in &mut out.rows {
            match row.cells[c] {
                Some(v) => last = Some(v),
                None => row.cells[c] = Some(last.unwrap_or(mean)),
            }
        }
    }
    Ok(out)
}

/// Nearest-rank quantile of sorted data.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `(lower, upper)` Tukey fences with multiplier `k`.
pub fn iqr_fences(values: &[f64], k: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = nearest_rank(&sorted, 0.25);
    let q3 = nearest_rank(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - k * iqr, q3 + k * iqr)
}

/// Winsorize values outside the IQR fences. Quartiles are nearest-rank
/// order statistics, so the fences are unchanged by clipping and the
/// operation is idempotent.
pub fn remove_outliers(series: &TimeSeries, iqr_multiplier: f64) -> Result<TimeSeries> {
    if !(iqr_multiplier > 0.0) {
        return Err(Error::invalid("IQR multiplier must be positive"));
    }
    if series.len() < 4 {
        return Err(Error::TooShort {
            what: "outlier removal",
            needed: 4,
            got: series.len(),
        });
    }
    let (lo, hi) = iqr_fences(&series.values, iqr_multiplier);
    let values = series.values.iter().map(|&v| v.clamp(lo, hi)).collect();
    Ok(series.with_values(series.name.clone(), values))
}

#[derive(Debug, Clone)]
pub struct FeatureFrame {
    pub index: Vec<NaiveDateTime>,
    pub target: TimeSeries,
    pub features: Vec<(String, TimeSeries)>,
    /// Set when the series was too short for the one-year lag feature.
    pub lag_warning: bool,
}

impl FeatureFrame {
    /// Frame holding only the target, for callers that skip feature
    /// engineering.
    pub fn from_target(target: TimeSeries) -> Self {
        FeatureFrame {
            index: target.timestamps().collect(),
            target,
            features: Vec::new(),
            lag_warning: false,
        }
    }

    pub fn feature(&self, name: &str) -> Option<&TimeSeries> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

/// Calendar features (hour, dayofweek with Monday = 0, month, year) and the
/// target lagged by one year. Rows without a lag value are dropped.
pub fn add_features(target: &TimeSeries) -> Result<FeatureFrame> {
    if target.step_hours <= 0 {
        return Err(Error::invalid("series step must be a positive whole number of hours"));
    }
    let n = target.len();
    let (offset, lag_warning) = if n > YEAR_LAG_STEPS {
        (YEAR_LAG_STEPS, false)
    } else {
        log::warn!(
            "series `{}` has {n} points, too short for the {YEAR_LAG_STEPS}-step lag feature",
            target.name
        );
        (0, true)
    };
    let frame_target = target.slice(offset..n);
    let index: Vec<NaiveDateTime> = frame_target.timestamps().collect();
    let calendar = |name: &str, f: &dyn Fn(&NaiveDateTime) -> f64| {
        (
            name.to_string(),
            frame_target.with_values(name, index.iter().map(f).collect()),
        )
    };
    let mut features = vec![
        calendar("hour", &|t| t.hour() as f64),
        calendar("dayofweek", &|t| t.weekday().num_days_from_monday() as f64),
        calendar("month", &|t| t.month() as f64),
        calendar("year", &|t| t.year() as f64),
    ];
    if !lag_warning {
        features.push((
            "lag_1y".to_string(),
            frame_target.with_values("lag_1y", target.values[..n - YEAR_LAG_STEPS].to_vec()),
        ));
    }
    Ok(FeatureFrame {
        index,
        target: frame_target,
        features,
        lag_warning,
    })
}

/// Write a table with ISO-8601 timestamps; missing cells are empty.
pub fn write_csv<W: Write>(table: &RawTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![TIMESTAMP.to_string()];
    header.extend(table.column_names.iter().cloned());
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.timestamp.format(ISO_FORMAT).to_string()];
        rec.extend(r.cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Write named series sharing one calendar as a CSV.
pub fn write_series_csv<W: Write>(columns: &[&TimeSeries], writer: W) -> Result<()> {
    let first = columns.first().ok_or_else(|| Error::invalid("no columns to write"))?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![TIMESTAMP.to_string()];
    header.extend(columns.iter().map(|s| s.name.clone()));
    w.write_record(&header)?;
    for i in 0..first.len() {
        let mut rec = vec![first.timestamp(i).format(ISO_FORMAT).to_string()];
        rec.extend(columns.iter().map(|s| s.values[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Full cleaning chain for one or more raw files.
pub fn clean(tables: &[RawTable], presence_threshold: f64) -> Result<RawTable> {
    let merged = merge_duplicate_columns(&resample_hourly(&concat(tables)));
    impute(&drop_sparse_columns(&merged, presence_threshold)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(names: &[&str], cols: &[Vec<Option<f64>>]) -> RawTable {
        let n = cols.first().map_or(0, Vec::len);
        let start = crate::series::default_start();
        RawTable {
            column_names: names.iter().map(|s| s.to_string()).collect(),
            rows: (0..n)
                .map(|i| RawRow {
                    timestamp: start + Duration::hours(i as i64),
                    cells: cols.iter().map(|c| c[i]).collect(),
                })
                .collect(),
            source_id: "test".into(),
        }
    }

    fn col(t: &RawTable, i: usize) -> Vec<Option<f64>> {
        t.column(i).collect()
    }

    #[test]
    fn loads_three_rows() {
        let csv = "From Date,PM2.5\n01-01-2021 00:00,10\n01-01-2021 01:00,11\n01-01-2021 02:00,\n";
        let t = read_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.column_names, vec!["PM2.5"]);
        assert_eq!(col(&t, 0), vec![Some(10.0), Some(11.0), None]);
    }

    #[test]
    fn iso_and_to_date() {
        let csv =
            "From Date,To Date,CO\n2021-01-01T01:00:00,2021-01-01T02:00:00,NA\n2021-01-01 00:00,2021-01-01 01:00,0.5\n";
        let t = read_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(t.column_names, vec!["CO"]);
        // sorted by time
        assert_eq!(col(&t, 0), vec![Some(0.5), None]);
    }

    #[test]
    fn keeps_both_xylene_columns() {
        let csv = "From Date,Xylene (ug/m3),Xylene ()\n01-01-2021 00:00,1,\n01-01-2021 01:00,,2\n";
        let t = read_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(t.column_names, vec!["Xylene (ug/m3)", "Xylene ()"]);
        let m = merge_duplicate_columns(&t);
        assert_eq!(m.column_names, vec!["Xylene"]);
        assert_eq!(col(&m, 0), vec![Some(1.0), Some(2.0)]);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(read_csv("".as_bytes(), "e"), Err(Error::NoHeader)));
        assert!(matches!(
            read_csv("Date,PM\n1,2\n".as_bytes(), "e"),
            Err(Error::MissingColumn(_))
        ));
        let err = read_csv("From Date,PM\n01-01-2021 00:00,1\nyesterday,2\n".as_bytes(), "e").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn merge_rules() {
        let t = table(&["NO2", "CO"], &[vec![Some(1.0)], vec![Some(2.0)]]);
        assert_eq!(merge_duplicate_columns(&t), t);
        let t = table(&["NO (ug/m3)", "no"], &[vec![Some(2.0), None], vec![Some(4.0), None]]);
        let m = merge_duplicate_columns(&t);
        assert_eq!(col(&m, 0), vec![Some(3.0), None]);
    }

    #[test]
    fn sparse_threshold() {
        let half = vec![Some(1.0), None, Some(1.0), None];
        let full = vec![Some(1.0); 4];
        let t = table(&["half", "full"], &[half, full]);
        assert_eq!(drop_sparse_columns(&t, 0.6).unwrap().column_names, vec!["full"]);
        assert_eq!(drop_sparse_columns(&t, 0.0).unwrap().column_names.len(), 2);
        assert_eq!(drop_sparse_columns(&t, 1.0).unwrap().column_names, vec!["full"]);
        assert!(drop_sparse_columns(&t, 1.5).is_err());
    }

    #[test]
    fn impute_examples() {
        let t = table(
            &["a", "b"],
            &[
                vec![Some(1.0), None, None, Some(4.0)],
                vec![None, Some(2.0), Some(4.0), Some(6.0)],
            ],
        );
        let out = impute(&t).unwrap();
        assert_eq!(col(&out, 0), vec![Some(1.0), Some(1.0), Some(1.0), Some(4.0)]);
        assert_eq!(col(&out, 1), vec![Some(4.0), Some(2.0), Some(4.0), Some(6.0)]);

        let t = table(&["a"], &[vec![None, Some(2.0), Some(4.0)]]);
        assert_eq!(col(&impute(&t).unwrap(), 0), vec![Some(3.0), Some(2.0), Some(4.0)]);

        let t = table(&["gone"], &[vec![None, None]]);
        match impute(&t) {
            Err(Error::EmptyColumn(c)) => assert_eq!(c, "gone"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resample_averages_and_fills() {
        let csv = "From Date,x\n01-01-2021 00:15,1\n01-01-2021 00:45,3\n01-01-2021 03:00,5\n";
        let t = resample_hourly(&read_csv(csv.as_bytes(), "mem").unwrap());
        assert_eq!(col(&t, 0), vec![Some(2.0), None, None, Some(5.0)]);
        let s = impute(&t).unwrap().to_series("x").unwrap();
        assert_eq!(s.values, vec![2.0, 2.0, 2.0, 5.0]);
        assert_eq!(s.step_hours, 1);
    }

    #[test]
    fn outliers() {
        let s = TimeSeries::hourly("x", vec![1.0, 1.0, 1.0, 1.0, 100.0]);
        // nearest-rank Q1 = x(2) = 1, Q3 = x(4) = 1, IQR 0, fences [1, 1]
        assert_eq!(remove_outliers(&s, 1.5).unwrap().values, vec![1.0; 5]);

        let s = TimeSeries::hourly("x", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 50.0]);
        // Q1 = x(2) = 2, Q3 = x(6) = 6, IQR 4, upper fence 6 + 6 = 12
        let out = remove_outliers(&s, 1.5).unwrap();
        assert_eq!(out.values[7], 12.0);
        assert_eq!(&out.values[..7], &s.values[..7]);

        let s = TimeSeries::hourly("x", vec![7.0; 6]);
        assert_eq!(remove_outliers(&s, 1.5).unwrap(), s);
        assert!(remove_outliers(&TimeSeries::hourly("x", vec![1.0; 3]), 1.5).is_err());
    }

    #[test]
    fn features() {
        let s = TimeSeries::hourly("pm", (0..100).map(f64::from).collect());
        let f = add_features(&s).unwrap();
        assert!(f.lag_warning);
        assert_eq!(f.target.len(), 100);
        assert_eq!(f.feature("hour").unwrap().values[0], 0.0);
        assert_eq!(f.feature("dayofweek").unwrap().values[0], 0.0);
        assert_eq!(f.feature("month").unwrap().values[0], 1.0);
        assert_eq!(f.feature("hour").unwrap().values[25], 1.0);
        assert_eq!(f.feature("dayofweek").unwrap().values[25], 1.0);
        assert!(f.feature("lag_1y").is_none());

        let n = YEAR_LAG_STEPS + 10;
        let s = TimeSeries::hourly("pm", (0..n).map(|i| i as f64).collect());
        let f = add_features(&s).unwrap();
        assert!(!f.lag_warning);
        assert_eq!(f.target.len(), 10);
        assert_eq!(f.index.len(), 10);
        assert_eq!(
            f.feature("lag_1y").unwrap().values,
            (0..10).map(f64::from).collect::<Vec<_>>()
        );
        assert_eq!(f.target.values[0], YEAR_LAG_STEPS as f64);
        assert_eq!(f.feature("year").unwrap().values[0], 2022.0);
    }

    #[test]
    fn write_roundtrip() {
        let t = table(&["a"], &[vec![Some(1.5), None]]);
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,a\n2021-01-04T00:00:00,1.5\n"));
        let back = read_csv(buf.as_slice(), "test").unwrap();
        assert_eq!(back, t);
    }

    fn masked_table() -> impl Strategy<Value = RawTable> {
        (1usize..4, 1usize..30).prop_flat_map(|(ncol, nrow)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.6, -50.0..50.0f64), nrow),
                ncol,
            )
            .prop_map(move |cols| {
                let names: Vec<String> = (0..ncol).map(|i| format!("c{i}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                table(&refs, &cols)
            })
        })
    }

    proptest! {
        #[test]
        fn impute_leaves_no_gaps(t in masked_table()) {
            match impute(&t) {
                Ok(out) => prop_assert!(out.rows.iter().all(|r| r.cells.iter().all(Option::is_some))),
                Err(Error::EmptyColumn(_)) => {
                    prop_assert!((0..t.column_names.len()).any(|c| t.column(c).all(|v| v.is_none())))
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn sparse_drop_is_monotone(t in masked_table(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let kept_lo = drop_sparse_columns(&t, lo).unwrap().column_names;
            let kept_hi = drop_sparse_columns(&t, hi).unwrap().column_names;
            prop_assert!(kept_hi.iter().all(|c| kept_lo.contains(c)));
        }

        #[test]
        fn winsorize_idempotent(v in proptest::collection::vec(-1e3..1e3f64, 4..60), k in 0.1..3.0f64) {
            let s = TimeSeries::hourly("x", v);
            let once = remove_outliers(&s, k).unwrap();
            let twice = remove_outliers(&once, k).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn merge_keeps_rows_and_values(
            a in proptest::collection::vec(proptest::option::of(0.0..9.0f64), 1..20),
            b_seed in proptest::collection::vec(proptest::option::of(0.0..9.0f64), 20),
        ) {
            let b = b_seed[..a.len()].to_vec();
            let t = table(&["Benzene (ug/m3)", "Benzene ()"], &[a.clone(), b.clone()]);
            let m = merge_duplicate_columns(&t);
            prop_assert_eq!(m.rows.len(), t.rows.len());
            for (i, cell) in m.column(0).enumerate() {
                if a[i].is_some() || b[i].is_some() {
                    prop_assert!(cell.is_some());
                }
            }
        }
    }
}
