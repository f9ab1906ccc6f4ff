//! Command-line front end. Exit codes: 0 success, 1 usage/config error,
//! 2 data error, 3 numerical failure.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aqcast::arima::{self, ArimaOrder};
use aqcast::decompose::stl_decompose;
use aqcast::ingest;
use aqcast::pipeline::{self, PipelineConfig, Synthetic};
use aqcast::residualnet::ResidualModel;
use aqcast::{Error, ErrorKind, Result, TimeSeries};
use clap::{CommandFactory, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aqcast",
    version,
    about = "Hybrid decomposition forecasting for air-quality series"
)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic component (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SeriesInput {
    /// Input CSV files (raw monitoring exports or cleaned tables).
    #[arg(long = "input", short, required = true)]
    inputs: Vec<PathBuf>,
    /// Column to use; defaults to the configured target.
    #[arg(long)]
    column: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw CSVs: merge, resample hourly, drop sparse columns, impute.
    Ingest {
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        /// Also write winsorized target plus calendar/lag features.
        #[arg(long)]
        features: bool,
    },
    /// STL-style decomposition into trend, seasonal and residual.
    Decompose {
        #[command(flatten)]
        input: SeriesInput,
    },
    /// Fit an ARIMA model and optionally forecast.
    FitArima {
        #[command(flatten)]
        input: SeriesInput,
        /// Order as p,d,q; defaults to the configured trend order.
        #[arg(long)]
        order: Option<ArimaOrder>,
        #[arg(long, default_value_t = 0)]
        horizon: usize,
    },
    /// Train the residual network on a series (or on the residual of its
    /// decomposition with --decompose).
    TrainResidual {
        #[command(flatten)]
        input: SeriesInput,
        #[arg(long)]
        decompose: bool,
        /// Recursive forecast horizon to write after training.
        #[arg(long, default_value_t = 0)]
        horizon: usize,
    },
    /// Full pipeline: decompose, ARIMA + residual network, recombine, score.
    Forecast {
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        /// Also score ARIMA-only and network-only baselines.
        #[arg(long)]
        ablations: bool,
    },
    /// Hyperparameter search for the residual network.
    Tune {
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Metrics between two CSV columns.
    Evaluate {
        #[arg(long)]
        actual: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        actual_column: Option<String>,
        #[arg(long)]
        predicted_column: Option<String>,
    },
    /// Bundle a forecast run's outputs with plot-ready files and a summary.
    Report {
        /// Directory written by `forecast`; defaults to the output directory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Write the synthetic benchmark series.
    Synth {
        #[arg(long, default_value_t = 4000)]
        length: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value = "y")]
        name: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.kind() == ErrorKind::Usage {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn out_file(cfg: &PipelineConfig, name: &str) -> Result<(PathBuf, File)> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, file))
}

fn done(path: &Path) {
    eprintln!("wrote {}", path.display());
}

/// Cleaned series from the inputs; a single-column table is used whatever
/// its name.
fn load_series(cfg: &PipelineConfig, input: &SeriesInput) -> Result<TimeSeries> {
    let tables = input.inputs.iter().map(ingest::load_csv).collect::<Result<Vec<_>>>()?;
    let table = ingest::clean(&tables, cfg.ingest.presence_threshold)?;
    let wanted = input.column.as_deref().unwrap_or(cfg.target_column());
    if table.find_column(wanted).is_none() && input.column.is_none() && table.column_names.len() == 1 {
        return table.to_series(&table.column_names[0].clone());
    }
    table.to_series(wanted)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { inputs, features } => {
            let tables = inputs.iter().map(ingest::load_csv).collect::<Result<Vec<_>>>()?;
            let table = ingest::clean(&tables, cfg.ingest.presence_threshold)?;
            let (path, file) = out_file(&cfg, "clean.csv")?;
            ingest::write_csv(&table, file)?;
            done(&path);
            eprintln!("{} rows, columns: {}", table.rows.len(), table.column_names.join(", "));
            if features {
                let frame = pipeline::prepare_frame(&cfg, &inputs)?;
                let mut cols = vec![&frame.target];
                cols.extend(frame.features.iter().map(|(_, s)| s));
                let (path, file) = out_file(&cfg, "features.csv")?;
                ingest::write_series_csv(&cols, file)?;
                done(&path);
            }
        }
        Command::Decompose { input } => {
            let series = load_series(&cfg, &input)?;
            let d = stl_decompose(&series, &cfg.decompose)?;
            let (path, file) = out_file(&cfg, "decomposition.csv")?;
            d.write_csv(file)?;
            done(&path);
        }
        Command::FitArima { input, order, horizon } => {
            let series = load_series(&cfg, &input)?;
            let order = match order {
                Some(o) => o,
                None => cfg.trend_order()?,
            };
            let model = arima::fit(&series, order)?;
            let path = cfg.out_dir.join("arima.json");
            out_file(&cfg, "arima.json")?;
            model.save(&path)?;
            done(&path);
            eprintln!(
                "ARIMA{order}: intercept {:.6} phi {:?} theta {:?} sigma2 {:.6}",
                model.intercept, model.phi, model.theta, model.sigma2
            );
            if horizon > 0 {
                let f = model.forecast_after(&series, horizon);
                let (path, file) = out_file(&cfg, "arima_forecast.csv")?;
                ingest::write_series_csv(&[&f], file)?;
                done(&path);
            }
        }
        Command::TrainResidual {
            input,
            decompose,
            horizon,
        } => {
            let mut series = load_series(&cfg, &input)?;
            if decompose {
                series = stl_decompose(&series, &cfg.decompose)?.residual;
            }
            let (model, report) = ResidualModel::fit(&cfg.network, &series)?;
            let path = cfg.out_dir.join("residual_net.json");
            out_file(&cfg, "residual_net.json")?;
            model.save(&path)?;
            done(&path);
            let (path, file) = out_file(&cfg, "training.csv")?;
            report.write_csv(file)?;
            done(&path);
            eprintln!(
                "best epoch {} of {}, validation mse {:.6} (scaled)",
                report.best_epoch,
                report.epochs.len(),
                report.best_val_mse
            );
            if horizon > 0 {
                let f = model.predict_series(&series, horizon)?;
                let (path, file) = out_file(&cfg, "residual_forecast.csv")?;
                ingest::write_series_csv(&[&f], file)?;
                done(&path);
            }
        }
        Command::Forecast { inputs, ablations } => {
            let mut cfg = cfg;
            cfg.ablations |= ablations;
            let frame = pipeline::prepare_frame(&cfg, &inputs)?;
            let mut run = pipeline::run_forecast(&cfg, &frame)?;
            run.write(&cfg.out_dir)?;
            for path in run.report.artifacts.values() {
                done(path);
            }
            println!("{}", serde_json::to_string_pretty(&run.report.metrics)?);
        }
        Command::Tune { inputs } => {
            let mut cfg = cfg;
            cfg.tuning.enabled = true;
            cfg.validate()?;
            let frame = pipeline::prepare_frame(&cfg, &inputs)?;
            let outcome = pipeline::tune(&cfg, &frame)?;
            let (path, file) = out_file(&cfg, "tuning_history.csv")?;
            outcome.result.write_history_csv(file)?;
            done(&path);
            let path = cfg.out_dir.join("best_params.txt");
            std::fs::write(&path, &outcome.assignment).map_err(|e| Error::io(&path, e))?;
            done(&path);
            let path = cfg.out_dir.join("tuned_config.toml");
            std::fs::write(&path, outcome.best_config.to_toml()?).map_err(|e| Error::io(&path, e))?;
            done(&path);
            eprintln!(
                "validation mse: default {:.6}, tuned {:.6}",
                outcome.default_val_mse, outcome.best_val_mse
            );
            print!("{}", outcome.assignment);
        }
        Command::Evaluate {
            actual,
            predicted,
            actual_column,
            predicted_column,
        } => {
            let m = pipeline::evaluate_files(
                &actual,
                actual_column.as_deref(),
                &predicted,
                predicted_column.as_deref(),
            )?;
            let text = serde_json::to_string_pretty(&m)?;
            let (path, _) = out_file(&cfg, "evaluation.json")?;
            std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
            done(&path);
            println!("{text}");
        }
        Command::Report { run_dir } => {
            let run_dir = run_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let bundle = cfg.out_dir.join("bundle");
            for path in write_bundle(&run_dir, &bundle)? {
                done(&path);
            }
        }
        Command::Synth {
            length,
            sigma,
            name,
            output,
        } => {
            let g = Synthetic {
                length,
                sigma,
                ..Synthetic::default()
            };
            let y = g.generate(cfg.seed)?;
            let series = y.with_values(name, y.values.clone());
            let path = match output {
                Some(p) => p,
                None => {
                    out_file(&cfg, "synthetic.csv")?;
                    cfg.out_dir.join("synthetic.csv")
                }
            };
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            ingest::write_series_csv(&[&series], file)?;
            done(&path);
        }
    }
    Ok(())
}

/// Copy a run's artifacts and add `plot_forecast.csv` (with errors) and a
/// Markdown summary whose metric columns follow the per-pollutant tables
/// (MSE, MAE, R², plus RMSE).
fn write_bundle(run_dir: &Path, bundle: &Path) -> Result<Vec<PathBuf>> {
    let report = pipeline::ForecastReport::load(&run_dir.join("report.json"))?;
    std::fs::create_dir_all(bundle).map_err(|e| Error::io(bundle, e))?;
    let mut written = Vec::new();
    for name in ["report.json", "predictions.csv", "decomposition.csv", "training.csv"] {
        let src = run_dir.join(name);
        if src.exists() {
            let dst = bundle.join(name);
            std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
            written.push(dst);
        }
    }

    let table = ingest::load_csv(run_dir.join("predictions.csv"))?;
    let col = |name: &str| -> Result<Vec<f64>> {
        let idx = table
            .find_column(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(table.column(idx).map(|v| v.unwrap_or(f64::NAN)).collect())
    };
    let (actual, y_hat) = (col("actual")?, col("y_hat")?);
    let path = bundle.join("plot_forecast.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["timestamp", "actual", "y_hat", "error", "abs_error"])?;
    for (i, r) in table.rows.iter().enumerate() {
        let e = actual[i] - y_hat[i];
        w.write_record([
            r.timestamp.format(aqcast::series::ISO_FORMAT).to_string(),
            actual[i].to_string(),
            y_hat[i].to_string(),
            e.to_string(),
            e.abs().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let fmt_r2 = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.5}"));
    let row = |name: &str, m: &pipeline::Metrics| {
        format!(
            "| {name} | {:.5} | {:.5} | {} | {:.5} |\n",
            m.mse,
            m.mae,
            fmt_r2(m.r2),
            m.rmse
        )
    };
    let mut md = format!(
        "# Forecast report: {}\n\nTarget `{}`, {} observations, test horizon {} \
         (train {}, validation {}).\nTrend ARIMA{}, seasonal ARIMA{}.\n\n\
         | Method | MSE | MAE | R² | RMSE |\n|---|---|---|---|---|\n",
        report.pollutant,
        report.target,
        report.n_obs,
        report.horizon,
        report.split.train,
        report.split.validation,
        report.trend_order,
        report.seasonal_order
    );
    md += &row("Hybrid", &report.metrics);
    md += &row("Trend + seasonal only", &report.components.without_residual);
    if let Some(a) = &report.ablations {
        md += &row("ARIMA only", &a.arima_only);
        md += &row("Network only", &a.net_only);
    }
    md += &format!(
        "\nComponent RMSE against a diagnostic decomposition: trend {:.5}, seasonal {:.5}, residual {:.5}.\n",
        report.components.trend_rmse, report.components.seasonal_rmse, report.components.residual_rmse
    );
    if report.residual_fallback {
        md += "\nThe residual was degenerate and forecast as zero.\n";
    }
    if report.lag_warning {
        md += "\nThe series was too short for the one-year lag feature.\n";
    }
    let path = bundle.join("summary.md");
    std::fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
