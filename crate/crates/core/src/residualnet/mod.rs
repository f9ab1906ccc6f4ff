//! Residual forecasting network.
//!
//! Parallel same-padded Conv1D branches (ReLU) with different kernel sizes
//! are concatenated channel-wise and fed to a stack of bidirectional LSTMs.
//! A volatility-gated attention layer pools the BiLSTM states,
//! `α = softmax_t(w · tanh(W_h h_t + W_v v_t + b))` with
//! `v_t = |r_t - r_{t-1}|` min-max normalized per window, and a dense head
//! maps the context `Σ α_t h_t` to the next residual. Gradients are exact
//! (hand-written backprop); training is Adam on MSE with early stopping.

mod data;
mod network;
mod params;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub use data::{make_windows, make_windows_from, Scaler, WindowDataset};
pub use network::{gate_signal, normalize_unit, volatility, Cache};
pub use params::{Attention, BiLstmLayer, ConvBranch, DenseHead, LstmCell, NetParams};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_branch: Vec<usize>,
    pub bilstm_units: usize,
    pub bilstm_layers: usize,
    /// Attention hidden width; `None` uses `bilstm_units`.
    pub attention_dim: Option<usize>,
    pub window: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: vec![3, 5, 7],
            filters_per_branch: vec![32, 64, 128],
            bilstm_units: 64,
            bilstm_layers: 1,
            attention_dim: None,
            window: 24,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 278,
            patience: 20,
            val_fraction: 0.2,
            seed: 42,
        }
    }
}

impl NetConfig {
    pub fn channels(&self) -> usize {
        self.filters_per_branch.iter().sum()
    }

    pub fn attention_dim(&self) -> usize {
        self.attention_dim.unwrap_or(self.bilstm_units)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kernel_sizes.is_empty() || self.kernel_sizes.len() != self.filters_per_branch.len() {
            return bad(format!(
                "{} kernel sizes vs {} filter counts",
                self.kernel_sizes.len(),
                self.filters_per_branch.len()
            ));
        }
        if let Some(k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0 || k > self.window) {
            return bad(format!(
                "kernel size {k} must be odd and at most the window {}",
                self.window
            ));
        }
        if self.filters_per_branch.contains(&0) || self.bilstm_units == 0 || self.bilstm_layers == 0 {
            return bad("filters, units and layers must be positive".into());
        }
        if self.attention_dim() == 0 || self.batch_size == 0 || self.window < 2 {
            return bad("attention dim and batch size must be positive, window at least 2".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

impl TrainReport {
    /// `epoch,train_mse,val_mse` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_mse", "val_mse"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.train_mse.to_string(), e.val_mse.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(params: &NetParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut NetParams, grad: &NetParams) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, (p, g)) in params.tensors_mut().into_iter().zip(grad.tensors()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Mini-batch Adam with early stopping on validation MSE. Returns the
/// parameters of the best validation epoch.
pub fn train(config: &NetConfig, data: &WindowDataset) -> Result<(NetParams, TrainReport)> {
    config.validate()?;
    if data.degenerate {
        return Err(Error::invalid("residual training data is degenerate (zero variance)"));
    }
    if data.window != config.window {
        return Err(Error::invalid(format!(
            "dataset window {} differs from config window {}",
            data.window, config.window
        )));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("empty training or validation split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = NetParams::init(config, &mut rng);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut order: Vec<usize> = data.train.clone().collect();

    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = chunk.iter().map(|&i| (data.inputs[i].as_slice(), data.targets[i]));
            let (loss, grad) = params.loss_and_gradients(batch);
            if !loss.is_finite() {
                log::error!("epoch {epoch}: {}", Error::NonFiniteLoss { batch: bi });
                return Err(Error::Divergence { epoch });
            }
            sse += loss * chunk.len() as f64;
            adam.step(&mut params, &grad);
        }
        let train_mse = sse / order.len() as f64;
        let val_mse = params.mse(data.val_pairs());
        if !val_mse.is_finite() || !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:.6}");
        epochs.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best = params.clone();
            best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait > config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok((
        best,
        TrainReport {
            epochs,
            best_epoch,
            best_val_mse: best_val,
            stopped_early,
        },
    ))
}

/// A trained network together with its input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub config: NetConfig,
    pub scaler: Scaler,
    pub params: NetParams,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: ResidualModel,
}

const CHECKPOINT_FORMAT: &str = "aqcast-residualnet";
const CHECKPOINT_VERSION: u32 = 1;

impl ResidualModel {
    /// Build windows from `residual`, train, and keep the scaler.
    pub fn fit(config: &NetConfig, residual: &TimeSeries) -> Result<(Self, TrainReport)> {
        let data = make_windows(residual, config.window, config.val_fraction)?;
        let (params, report) = train(config, &data)?;
        Ok((
            ResidualModel {
                config: config.clone(),
                scaler: data.scaler,
                params,
            },
            report,
        ))
    }

    /// Network on an unscaled window of exactly `config.window` values.
    pub fn forward(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
        if window.len() != self.config.window {
            return Err(Error::invalid(format!(
                "window length {} != configured {}",
                window.len(),
                self.config.window
            )));
        }
        let scaled: Vec<f64> = window.iter().map(|&v| self.scaler.scale(v)).collect();
        let (z, att) = self.params.forward(&scaled);
        Ok((self.scaler.unscale(z), att))
    }

    /// Recursive multi-step forecast: each prediction is appended to the
    /// window (in scaled space) before the next step.
    pub fn predict_series(&self, history: &TimeSeries, horizon: usize) -> Result<TimeSeries> {
        let w = self.config.window;
        if history.len() < w {
            return Err(Error::TooShort {
                what: "residual history",
                needed: w,
                got: history.len(),
            });
        }
        let mut window: Vec<f64> = history.values[history.len() - w..]
            .iter()
            .map(|&v| self.scaler.scale(v))
            .collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let z = self.params.predict(&window);
            out.push(self.scaler.unscale(z));
            window.remove(0);
            window.push(z);
        }
        Ok(history.continuation(format!("{}_forecast", history.name), out))
    }

    /// One-step-ahead predictions for each of `actuals`, each from a window
    /// of realized values ending just before it.
    pub fn predict_rolling(&self, history: &[f64], actuals: &[f64]) -> Result<Vec<f64>> {
        let w = self.config.window;
        if history.len() < w {
            return Err(Error::TooShort {
                what: "residual history",
                needed: w,
                got: history.len(),
            });
        }
        let mut buf: Vec<f64> = history[history.len() - w..]
            .iter()
            .map(|&v| self.scaler.scale(v))
            .collect();
        let mut out = Vec::with_capacity(actuals.len());
        for &a in actuals {
            out.push(self.scaler.unscale(self.params.predict(&buf)));
            buf.remove(0);
            buf.push(self.scaler.scale(a));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        if !ck.model.params.check_shapes() || !ck.model.params.is_finite() {
            return Err(Error::invalid(format!(
                "{}: inconsistent parameter tensors",
                path.display()
            )));
        }
        Ok(ck.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetConfig {
        NetConfig {
            kernel_sizes: vec![3, 5],
            filters_per_branch: vec![2, 2],
            bilstm_units: 2,
            attention_dim: Some(3),
            window: 8,
            max_epochs: 5,
            batch_size: 4,
            ..NetConfig::default()
        }
    }

    fn params(cfg: &NetConfig, seed: u64) -> NetParams {
        NetParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn volatility_examples() {
        assert_eq!(volatility(&[1.0, 3.0, 2.0]), vec![0.0, 2.0, 1.0]);
        assert_eq!(volatility(&[4.0; 5]), vec![0.0; 5]);
        assert_eq!(volatility(&[0.0, 5.0]), vec![0.0, 5.0]);
        assert_eq!(gate_signal(&[4.0; 5]), vec![0.0; 5]);
        assert_eq!(gate_signal(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn shapes() {
        let cfg = NetConfig {
            bilstm_layers: 2,
            ..tiny()
        };
        let p = params(&cfg, 1);
        assert!(p.check_shapes());
        assert_eq!(p.channels(), 4);
        assert_eq!(p.layers[1].forward.input, 4);
        assert_eq!(p.attention.hidden, 4);
        assert_eq!(p.tensor_names().len(), p.tensors().len());
        let c = p.forward_cached(&[0.1; 8]);
        assert_eq!(c.attention.len(), 8);
    }

    #[test]
    fn zero_input_gives_dense_bias() {
        let mut p = params(&tiny(), 3);
        for b in &mut p.branches {
            b.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        for l in &mut p.layers {
            l.forward.bias.iter_mut().for_each(|v| *v = 0.0);
            l.backward.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        p.attention.bias.iter_mut().for_each(|v| *v = 0.0);
        p.head.bias[0] = 0.37;
        let (y, att) = p.forward(&[0.0; 8]);
        assert!((y - 0.37).abs() < 1e-15);
        assert!((att.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_batch_has_zero_gradient() {
        let p = params(&tiny(), 4);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..8).map(|i| ((i + k) as f64).sin()).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| p.predict(x)).collect();
        let (mse, g) = p.loss_and_gradients(xs.iter().map(Vec::as_slice).zip(ys.iter().copied()));
        assert_eq!(mse, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let p = params(&tiny(), 5);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..8).map(|i| ((i * k) as f64).cos()).collect())
            .collect();
        let ys = [0.5, -1.0, 2.0];
        let (m1, g1) = p.loss_and_gradients(xs.iter().map(Vec::as_slice).zip(ys));
        let twice: Vec<(&[f64], f64)> = xs
            .iter()
            .zip(ys)
            .flat_map(|(x, y)| [(x.as_slice(), y), (x.as_slice(), y)])
            .collect();
        let (m2, g2) = p.loss_and_gradients(twice);
        assert!((m1 - m2).abs() <= 1e-14 * m1.abs());
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    fn sine_dataset(n: usize, window: usize) -> WindowDataset {
        let v: Vec<f64> = (0..n)
            .map(|t| 0.5 * (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
            .collect();
        make_windows_from(&v, window, 0.2).unwrap()
    }

    #[test]
    fn patience_zero_stops_on_first_regression() {
        let cfg = NetConfig {
            patience: 0,
            max_epochs: 200,
            learning_rate: 0.05,
            ..tiny()
        };
        let data = sine_dataset(120, 8);
        let (_, report) = train(&cfg, &data).unwrap();
        if report.stopped_early {
            let n = report.epochs.len();
            assert!(report.epochs[n - 1].val_mse >= report.epochs[n - 2].val_mse.min(report.best_val_mse));
            assert_eq!(report.best_epoch, n - 1);
        } else {
            assert_eq!(report.epochs.len(), 200);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny();
        let data = sine_dataset(80, 8);
        let (p1, r1) = train(&cfg, &data).unwrap();
        let (p2, r2) = train(&cfg, &data).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn degenerate_net_forecasts_constant() {
        let cfg = tiny();
        let mut p = params(&cfg, 6);
        p.fill(0.0);
        p.head.bias[0] = 0.5;
        let m = ResidualModel {
            config: cfg,
            scaler: Scaler { mean: 1.0, std: 2.0 },
            params: p,
        };
        let hist = TimeSeries::hourly("r", (0..20).map(f64::from).collect());
        let f = m.predict_series(&hist, 5).unwrap();
        assert_eq!(f.values, vec![2.0; 5]);
        assert_eq!(f.start, hist.timestamp(20));
    }

    #[test]
    fn horizon_one_matches_forward() {
        let cfg = tiny();
        let m = ResidualModel {
            config: cfg.clone(),
            scaler: Scaler { mean: 0.2, std: 1.5 },
            params: params(&cfg, 8),
        };
        let hist = TimeSeries::hourly("r", (0..30).map(|i| (i as f64 * 0.7).sin()).collect());
        let f = m.predict_series(&hist, 1).unwrap();
        let (y, _) = m.forward(&hist.values[22..]).unwrap();
        assert_eq!(f.values[0], y);
        assert!(m.predict_series(&hist.slice(0..5), 1).is_err());
        let rolled = m.predict_rolling(&hist.values, &[0.0]).unwrap();
        assert_eq!(rolled[0], y);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = tiny();
        let m = ResidualModel {
            config: cfg.clone(),
            scaler: Scaler { mean: 0.1, std: 0.3 },
            params: params(&cfg, 9),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        m.save(&path).unwrap();
        assert_eq!(ResidualModel::load(&path).unwrap(), m);
        std::fs::write(&path, "{\"format\":\"other\",\"version\":1}").unwrap();
        assert!(ResidualModel::load(&path).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::default().validate().is_ok());
        let bad = NetConfig {
            kernel_sizes: vec![3, 4],
            filters_per_branch: vec![1, 1],
            ..NetConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NetConfig {
            filters_per_branch: vec![1],
            ..NetConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
