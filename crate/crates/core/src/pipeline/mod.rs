//! End-to-end forecasting: decompose the training+validation span, forecast
//! trend and seasonal parts with ARIMA, the residual with the network, and
//! sum the three (`Ŷ = T̂ + Ŝ + R̂`) over the test span.
//!
//! Trend and seasonal forecasts are multi-step from the end of the fitted
//! span; test data is never decomposed for forecasting. The residual network
//! predicts one step ahead from a window of realized residuals
//! `y − T̂ − Ŝ`, so it sees only observations strictly before the target.

mod config;
pub mod metrics;
mod synth;
mod tune;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arima::{self, ArimaModel};
use crate::decompose::{stl_decompose, DecomposedSeries};
use crate::error::{Error, Result, StageExt};
use crate::ingest::{self, FeatureFrame};
use crate::residualnet::{make_windows_from, train, NetConfig, ResidualModel, TrainReport};
use crate::series::{TimeSeries, ISO_FORMAT};

pub use config::{
    ArimaConfig, IngestConfig, PipelineConfig, SplitConfig, SplitSizes, Tunable, TuningConfig, KERNEL_SETS,
};
pub use metrics::{mae, mse, r2, rmse, Metrics};
pub use synth::Synthetic;
pub use tune::{apply_position, encode_config, search_space, tune, TuneOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    /// RMSE of each forecast component against a diagnostic decomposition
    /// of the full series (computed after the fact, not used to forecast).
    pub trend_rmse: f64,
    pub seasonal_rmse: f64,
    pub residual_rmse: f64,
    /// Metrics of `T̂ + Ŝ` alone.
    pub without_residual: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablations {
    /// ARIMA on the raw series, one step ahead.
    pub arima_only: Metrics,
    /// Residual network trained on the raw series, one step ahead.
    pub net_only: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub pollutant: String,
    pub target: String,
    pub n_obs: usize,
    pub split: SplitSizes,
    pub horizon: usize,
    pub trend_order: String,
    pub seasonal_order: String,
    pub metrics: Metrics,
    pub components: ComponentErrors,
    /// Residual network validation MSE in residual units.
    pub validation_mse: Option<f64>,
    /// The residual was degenerate and forecast as zero.
    pub residual_fallback: bool,
    pub lag_warning: bool,
    pub ablations: Option<Ablations>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ForecastRun {
    pub report: ForecastReport,
    pub actual: TimeSeries,
    pub trend_hat: Vec<f64>,
    pub seasonal_hat: Vec<f64>,
    pub residual_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub decomposition: DecomposedSeries,
    pub trend_model: ArimaModel,
    pub seasonal_model: ArimaModel,
    pub residual_model: Option<ResidualModel>,
    pub training: Option<TrainReport>,
}

/// Residual-network config as used inside the pipeline: its validation
/// split mirrors the pipeline's validation fraction of the fitted span.
pub(crate) fn pipeline_net_config(config: &PipelineConfig) -> NetConfig {
    let s = config.split;
    NetConfig {
        val_fraction: s.validation / (s.train + s.validation),
        ..config.network.clone()
    }
}

/// Train on `values`; `None` when the data has no spread.
fn fit_network(net: &NetConfig, values: &[f64]) -> Result<Option<(ResidualModel, TrainReport)>> {
    let data = make_windows_from(values, net.window, net.val_fraction)?;
    if data.degenerate {
        return Ok(None);
    }
    let (params, report) = train(net, &data)?;
    Ok(Some((
        ResidualModel {
            config: net.clone(),
            scaler: data.scaler,
            params,
        },
        report,
    )))
}

fn check_lengths(config: &PipelineConfig, n: usize) -> Result<SplitSizes> {
    let sizes = config.split.sizes(n);
    if sizes.test < 2 {
        return Err(Error::TooShort {
            what: "test split",
            needed: 2,
            got: sizes.test,
        });
    }
    let needed = 2 * config.decompose.period + config.network.window + 3;
    if sizes.fit() < needed {
        return Err(Error::TooShort {
            what: "training+validation span",
            needed,
            got: sizes.fit(),
        });
    }
    Ok(sizes)
}

pub fn run_forecast(config: &PipelineConfig, frame: &FeatureFrame) -> Result<ForecastRun> {
    config.validate()?;
    let y = &frame.target;
    y.ensure_finite()?;
    let sizes = check_lengths(config, y.len())?;
    let fit = y.slice(0..sizes.fit());
    let actual = y.slice(sizes.fit()..y.len());
    let h = sizes.test;

    let decomposition = stl_decompose(&fit, &config.decompose).stage("decompose")?;
    let trend_order = config.trend_order()?;
    let seasonal_order = config.seasonal_order()?;
    let trend_model = arima::fit(&decomposition.trend, trend_order).stage("trend arima")?;
    let seasonal_model = arima::fit(&decomposition.seasonal, seasonal_order).stage("seasonal arima")?;
    let trend_hat = trend_model.forecast(h);
    let seasonal_hat = seasonal_model.forecast(h);
    let realized: Vec<f64> = (0..h)
        .map(|i| actual.values[i] - trend_hat[i] - seasonal_hat[i])
        .collect();

    let net = pipeline_net_config(config);
    let ablate = config.ablations;
    let raw_fit = fit.values.clone();
    let (hybrid, net_only) = rayon::join(
        || fit_network(&net, &decomposition.residual.values).stage("residual network"),
        || {
            if ablate {
                fit_network(&net, &raw_fit).stage("network-only baseline").map(Some)
            } else {
                Ok(None)
            }
        },
    );
    let (residual_model, training) = match hybrid? {
        Some((m, r)) => (Some(m), Some(r)),
        None => {
            log::warn!("residual component is degenerate; forecasting it as zero");
            (None, None)
        }
    };
    let residual_hat = match &residual_model {
        Some(m) => m
            .predict_rolling(&decomposition.residual.values, &realized)
            .stage("residual network")?,
        None => vec![0.0; h],
    };
    let y_hat: Vec<f64> = (0..h)
        .map(|i| trend_hat[i] + seasonal_hat[i] + residual_hat[i])
        .collect();
    let metrics = Metrics::compute(&actual.values, &y_hat)?;

    let components = {
        let diag = stl_decompose(y, &config.decompose).stage("diagnostic decompose")?;
        let tail = |s: &TimeSeries| s.values[sizes.fit()..].to_vec();
        let smooth: Vec<f64> = (0..h).map(|i| trend_hat[i] + seasonal_hat[i]).collect();
        ComponentErrors {
            trend_rmse: rmse(&tail(&diag.trend), &trend_hat)?,
            seasonal_rmse: rmse(&tail(&diag.seasonal), &seasonal_hat)?,
            residual_rmse: rmse(&tail(&diag.residual), &residual_hat)?,
            without_residual: Metrics::compute(&actual.values, &smooth)?,
        }
    };

    let ablations = match net_only? {
        None => None,
        Some(net_only) => {
            let baseline = arima::fit(&fit, config.baseline_order()?).stage("arima-only baseline")?;
            let arima_hat = baseline.rolling_one_step(&actual.values);
            let net_hat = match net_only {
                Some((m, _)) => m.predict_rolling(&fit.values, &actual.values)?,
                None => vec![fit.values[fit.len() - 1]; h],
            };
            Some(Ablations {
                arima_only: Metrics::compute(&actual.values, &arima_hat)?,
                net_only: Metrics::compute(&actual.values, &net_hat)?,
            })
        }
    };

    let validation_mse = match (&residual_model, &training) {
        (Some(m), Some(r)) => Some(r.best_val_mse * m.scaler.std * m.scaler.std),
        _ => None,
    };
    let report = ForecastReport {
        pollutant: config.pollutant.clone(),
        target: y.name.clone(),
        n_obs: y.len(),
        split: sizes,
        horizon: h,
        trend_order: trend_order.to_string(),
        seasonal_order: seasonal_order.to_string(),
        metrics,
        components,
        validation_mse,
        residual_fallback: residual_model.is_none(),
        lag_warning: frame.lag_warning,
        ablations,
        artifacts: BTreeMap::new(),
    };
    Ok(ForecastRun {
        report,
        actual,
        trend_hat,
        seasonal_hat,
        residual_hat,
        y_hat,
        decomposition,
        trend_model,
        seasonal_model,
        residual_model,
        training,
    })
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

impl ForecastRun {
    /// `timestamp, actual, trend_hat, seasonal_hat, residual_hat, y_hat`.
    pub fn write_predictions<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "timestamp",
            "actual",
            "trend_hat",
            "seasonal_hat",
            "residual_hat",
            "y_hat",
        ])?;
        for i in 0..self.y_hat.len() {
            w.write_record([
                self.actual.timestamp(i).format(ISO_FORMAT).to_string(),
                self.actual.values[i].to_string(),
                self.trend_hat[i].to_string(),
                self.seasonal_hat[i].to_string(),
                self.residual_hat[i].to_string(),
                self.y_hat[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Write all artifacts into `dir` and record their paths in the report.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut artifacts = BTreeMap::new();
        let path = dir.join("predictions.csv");
        self.write_predictions(create(&path)?)?;
        artifacts.insert("predictions".into(), path);
        let path = dir.join("decomposition.csv");
        self.decomposition.write_csv(create(&path)?)?;
        artifacts.insert("decomposition".into(), path);
        if let Some(t) = &self.training {
            let path = dir.join("training.csv");
            t.write_csv(create(&path)?)?;
            artifacts.insert("training".into(), path);
        }
        let path = dir.join("trend_arima.json");
        self.trend_model.save(&path)?;
        artifacts.insert("trend_model".into(), path);
        let path = dir.join("seasonal_arima.json");
        self.seasonal_model.save(&path)?;
        artifacts.insert("seasonal_model".into(), path);
        if let Some(m) = &self.residual_model {
            let path = dir.join("residual_net.json");
            m.save(&path)?;
            artifacts.insert("residual_model".into(), path);
        }
        let path = dir.join("report.json");
        artifacts.insert("report".into(), path.clone());
        self.report.artifacts = artifacts;
        self.report.save(&path)
    }
}

impl ForecastReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Load raw or cleaned CSVs and run the preprocessing chain configured in
/// `config.ingest`.
pub fn prepare_frame(config: &PipelineConfig, inputs: &[PathBuf]) -> Result<FeatureFrame> {
    if inputs.is_empty() {
        return Err(Error::Config("no input files".into()));
    }
    let tables = inputs
        .iter()
        .map(ingest::load_csv)
        .collect::<Result<Vec<_>>>()
        .stage("ingest")?;
    let table = ingest::clean(&tables, config.ingest.presence_threshold).stage("ingest")?;
    let mut series = table.to_series(config.target_column()).stage("ingest")?;
    if config.ingest.iqr_multiplier > 0.0 {
        series = ingest::remove_outliers(&series, config.ingest.iqr_multiplier).stage("ingest")?;
    }
    if config.ingest.features {
        ingest::add_features(&series).stage("ingest")
    } else {
        Ok(FeatureFrame::from_target(series))
    }
}

/// One numeric column of a CSV with a timestamp column; the first value
/// column when `column` is `None`.
pub fn read_column(path: &Path, column: Option<&str>) -> Result<(Vec<chrono::NaiveDateTime>, Vec<f64>)> {
    let table = ingest::load_csv(path)?;
    let idx = match column {
        Some(name) => table
            .find_column(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        None if table.column_names.is_empty() => return Err(Error::MissingColumn("<value>".into())),
        None => 0,
    };
    let mut values = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        values.push(r.cells[idx].ok_or_else(|| Error::Parse {
            row: i + 2,
            message: format!("missing value in `{}`", table.column_names[idx]),
        })?);
    }
    Ok((table.rows.iter().map(|r| r.timestamp).collect(), values))
}

/// Metrics between two CSV columns, rows matched by position; timestamps
/// must agree.
pub fn evaluate_files(
    actual: &Path,
    actual_column: Option<&str>,
    predicted: &Path,
    predicted_column: Option<&str>,
) -> Result<Metrics> {
    let (ta, ya) = read_column(actual, actual_column)?;
    let (tp, yp) = read_column(predicted, predicted_column)?;
    if ta.len() != tp.len() {
        return Err(Error::invalid(format!(
            "{} has {} rows, {} has {}",
            actual.display(),
            ta.len(),
            predicted.display(),
            tp.len()
        )));
    }
    if let Some(i) = ta.iter().zip(&tp).position(|(a, b)| a != b) {
        return Err(Error::invalid(format!(
            "timestamps differ at row {}: {} vs {}",
            i + 2,
            ta[i].format(ISO_FORMAT),
            tp[i].format(ISO_FORMAT)
        )));
    }
    Metrics::compute(&ya, &yp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig {
            pollutant: "synthetic".into(),
            ablations: true,
            ..PipelineConfig::default()
        };
        cfg.arima.trend = Some("1,1,0".into());
        cfg.arima.seasonal = Some("2,0,0".into());
        cfg.network = NetConfig {
            kernel_sizes: vec![3],
            filters_per_branch: vec![2],
            bilstm_units: 2,
            window: 8,
            max_epochs: 3,
            ..NetConfig::default()
        };
        cfg
    }

    fn frame(n: usize, sigma: f64, seed: u64) -> FeatureFrame {
        let g = Synthetic {
            length: n,
            sigma,
            ..Synthetic::default()
        };
        FeatureFrame::from_target(g.generate(seed).unwrap())
    }

    #[test]
    fn reconstruction_and_shapes() {
        let cfg = small_config();
        let run = run_forecast(&cfg, &frame(400, 1.0, 1)).unwrap();
        assert_eq!(run.y_hat.len(), run.report.horizon);
        assert_eq!(run.report.split.test, 60);
        for i in 0..run.y_hat.len() {
            let s = run.trend_hat[i] + run.seasonal_hat[i] + run.residual_hat[i];
            assert!((run.y_hat[i] - s).abs() <= 1e-9 * s.abs().max(1.0));
        }
        let m = run.report.metrics;
        assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-9 * m.mse);
        assert!(m.r2.unwrap() <= 1.0);
        assert!(run.report.ablations.is_some());
    }

    #[test]
    fn short_test_split_is_an_error() {
        let mut cfg = small_config();
        cfg.split = SplitConfig {
            train: 0.7,
            validation: 0.299,
            test: 0.001,
        };
        assert!(run_forecast(&cfg, &frame(400, 1.0, 1)).is_err());
    }

    #[test]
    fn stage_names_in_errors() {
        let cfg = small_config();
        let mut f = frame(400, 1.0, 1);
        f.target.values[3] = f64::NAN;
        assert!(run_forecast(&cfg, &f).is_err());
        let f = FeatureFrame::from_target(TimeSeries::hourly("y", vec![1.0; 40]));
        assert!(matches!(run_forecast(&cfg, &f), Err(Error::TooShort { .. })));
    }

    #[test]
    fn writes_artifacts() {
        let cfg = small_config();
        let mut run = run_forecast(&cfg, &frame(400, 1.0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run.write(dir.path()).unwrap();
        for f in ["predictions.csv", "decomposition.csv", "report.json", "training.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let m = evaluate_files(
            &dir.path().join("predictions.csv"),
            Some("actual"),
            &dir.path().join("predictions.csv"),
            Some("y_hat"),
        )
        .unwrap();
        assert!((m.rmse - run.report.metrics.rmse).abs() <= 1e-12 * m.rmse);
        let back = ForecastReport::load(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, run.report);
    }
}
