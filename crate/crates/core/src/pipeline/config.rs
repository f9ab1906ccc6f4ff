use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arima::ArimaOrder;
use crate::decompose::StlConfig;
use crate::error::{Error, Result};
use crate::ingest::{DEFAULT_IQR_MULTIPLIER, DEFAULT_PRESENCE_THRESHOLD};
use crate::residualnet::NetConfig;
use crate::uammo::OptimizerConfig;

/// Pipeline configuration, read from TOML:
///
/// ```toml
/// pollutant = "PM2.5"
/// seed = 7
/// out_dir = "out"
///
/// [ingest]
/// presence_threshold = 0.6
/// iqr_multiplier = 1.5
///
/// [decompose]
/// period = 24
///
/// [arima]
/// trend = "1,1,0"
/// seasonal = "2,0,0"
///
/// [split]
/// train = 0.7
/// validation = 0.15
/// test = 0.15
///
/// [network]
/// kernel_sizes = [3, 5, 7]
/// filters_per_branch = [32, 64, 128]
///
/// [tuning]
/// enabled = true
/// dims = ["learning_rate", "bilstm_units"]
///
/// [tuning.optimizer]
/// population = 30
/// ```
///
/// Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pollutant: String,
    /// Column to forecast; defaults to `pollutant`.
    pub target: Option<String>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub ingest: IngestConfig,
    pub decompose: StlConfig,
    pub arima: ArimaConfig,
    pub split: SplitConfig,
    pub network: NetConfig,
    pub tuning: TuningConfig,
    /// Also score the ARIMA-only and network-only baselines on raw data.
    pub ablations: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seed = 42;
        PipelineConfig {
            pollutant: "PM2.5".into(),
            target: None,
            seed,
            out_dir: PathBuf::from("out"),
            ingest: IngestConfig::default(),
            decompose: StlConfig::default(),
            arima: ArimaConfig::default(),
            split: SplitConfig::default(),
            network: NetConfig {
                seed,
                ..NetConfig::default()
            },
            tuning: TuningConfig::default(),
            ablations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub presence_threshold: f64,
    /// Winsorization fence multiplier; `0` disables outlier handling.
    pub iqr_multiplier: f64,
    /// Build calendar and one-year lag features.
    pub features: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            presence_threshold: DEFAULT_PRESENCE_THRESHOLD,
            iqr_multiplier: DEFAULT_IQR_MULTIPLIER,
            features: true,
        }
    }
}

/// Orders as `"p,d,q"` strings. Unset trend/seasonal orders fall back to
/// the pollutant's default order; the baseline order falls back to the
/// trend order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArimaConfig {
    pub trend: Option<String>,
    pub seasonal: Option<String>,
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.7,
            validation: 0.15,
            test: 0.15,
        }
    }
}

/// Chronological split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn fit(&self) -> usize {
        self.train + self.validation
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {parts:?}")));
        }
        Ok(())
    }

    /// Train and validation sizes are floored; the test split takes the rest.
    pub fn sizes(&self, n: usize) -> SplitSizes {
        let train = (self.train * n as f64).floor() as usize;
        let validation = (self.validation * n as f64).floor() as usize;
        SplitSizes {
            train,
            validation,
            test: n.saturating_sub(train + validation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tunable {
    /// Searched as `log10(learning_rate)`.
    LearningRate,
    BilstmUnits,
    BatchSize,
    /// Multiplier on every branch's filter count.
    FiltersScale,
    /// Index into [`KERNEL_SETS`].
    KernelSet,
    Window,
}

/// Candidate kernel-size sets for [`Tunable::KernelSet`].
pub const KERNEL_SETS: [&[usize]; 4] = [&[3], &[3, 5], &[3, 5, 7], &[5, 7, 9]];

impl Tunable {
    pub fn name(self) -> &'static str {
        match self {
            Tunable::LearningRate => "learning_rate",
            Tunable::BilstmUnits => "bilstm_units",
            Tunable::BatchSize => "batch_size",
            Tunable::FiltersScale => "filters_scale",
            Tunable::KernelSet => "kernel_set",
            Tunable::Window => "window",
        }
    }

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Tunable::LearningRate => (-4.0, -2.0),
            Tunable::BilstmUnits => (2.0, 64.0),
            Tunable::BatchSize => (8.0, 128.0),
            Tunable::FiltersScale => (0.25, 2.0),
            Tunable::KernelSet => (0.0, (KERNEL_SETS.len() - 1) as f64),
            Tunable::Window => (8.0, 48.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub enabled: bool,
    pub dims: Vec<Tunable>,
    /// Per-dimension `[lower, upper]` overrides, keyed by dimension name.
    pub bounds: BTreeMap<String, [f64; 2]>,
    /// Epoch cap for each fitness evaluation.
    pub epoch_cap: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            enabled: false,
            dims: vec![Tunable::LearningRate, Tunable::BilstmUnits, Tunable::BatchSize],
            bounds: BTreeMap::new(),
            epoch_cap: 30,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // a top-level seed seeds everything unless a section pins its own
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let pinned = |section: &str| {
            table
                .get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key("seed"))
        };
        let net_pinned = pinned("network");
        let opt_pinned = table
            .get("tuning")
            .and_then(|t| t.get("optimizer"))
            .and_then(|o| o.as_table())
            .is_some_and(|o| o.contains_key("seed"));
        if !net_pinned {
            cfg.network.seed = cfg.seed;
        }
        if !opt_pinned {
            cfg.tuning.optimizer.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reseed every stochastic component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.network.seed = seed;
        self.tuning.optimizer.seed = seed;
        self
    }

    pub fn target_column(&self) -> &str {
        self.target.as_deref().unwrap_or(&self.pollutant)
    }

    fn order(&self, value: &Option<String>, what: &str) -> Result<ArimaOrder> {
        match value {
            Some(s) => s.parse(),
            None => ArimaOrder::for_pollutant(&self.pollutant).ok_or_else(|| {
                Error::Config(format!(
                    "no default ARIMA order for pollutant `{}`; set arima.{what}",
                    self.pollutant
                ))
            }),
        }
    }

    pub fn trend_order(&self) -> Result<ArimaOrder> {
        self.order(&self.arima.trend, "trend")
    }

    pub fn seasonal_order(&self) -> Result<ArimaOrder> {
        match &self.arima.seasonal {
            Some(s) => s.parse(),
            None => self.trend_order(),
        }
    }

    pub fn baseline_order(&self) -> Result<ArimaOrder> {
        match &self.arima.baseline {
            Some(s) => s.parse(),
            None => self.trend_order(),
        }
    }

    /// Bounds of a tunable dimension, honouring overrides.
    pub fn tuning_bounds(&self, t: Tunable) -> (f64, f64) {
        self.tuning
            .bounds
            .get(t.name())
            .map(|[lo, hi]| (*lo, *hi))
            .unwrap_or_else(|| t.default_bounds())
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.network.validate()?;
        self.trend_order()?;
        self.seasonal_order()?;
        self.baseline_order()?;
        if self.decompose.period < 2 {
            return Err(Error::Config("decompose.period must be at least 2".into()));
        }
        if !(self.ingest.presence_threshold >= 0.0 && self.ingest.presence_threshold <= 1.0) {
            return Err(Error::Config("ingest.presence_threshold must be in [0, 1]".into()));
        }
        if !(self.ingest.iqr_multiplier >= 0.0) {
            return Err(Error::Config("ingest.iqr_multiplier must be nonnegative".into()));
        }
        if let Some(name) = self
            .tuning
            .bounds
            .keys()
            .find(|k| !self.tuning.dims.iter().any(|d| d.name() == k.as_str()))
        {
            return Err(Error::Config(format!("tuning.bounds.{name} is not a tuned dimension")));
        }
        if self.tuning.enabled {
            if self.tuning.dims.is_empty() {
                return Err(Error::Config("tuning enabled with no dims".into()));
            }
            if self.tuning.epoch_cap == 0 {
                return Err(Error::Config("tuning.epoch_cap must be positive".into()));
            }
            self.tuning.optimizer.validate()?;
        }
        Ok(())
    }
}
