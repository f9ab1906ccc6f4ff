use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Tunable, KERNEL_SETS};
use super::pipeline_net_config;
use crate::decompose::stl_decompose;
use crate::error::{Error, ErrorKind, Result, StageExt};
use crate::ingest::FeatureFrame;
use crate::residualnet::{make_windows_from, train, NetConfig};
use crate::uammo::{Dim, DimKind, OptimizeResult, Optimizer, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    /// Input config with the best hyperparameters applied (epoch budget
    /// restored).
    pub best_config: PipelineConfig,
    pub result: OptimizeResult,
    /// Validation MSE of the untuned network under the same epoch cap.
    pub default_val_mse: f64,
    pub best_val_mse: f64,
    /// `name=value` lines for the best position.
    pub assignment: String,
}

pub fn search_space(config: &PipelineConfig) -> Result<SearchSpace> {
    SearchSpace::new(
        config
            .tuning
            .dims
            .iter()
            .map(|&t| {
                let (lo, hi) = config.tuning_bounds(t);
                let kind = match t {
                    Tunable::LearningRate | Tunable::FiltersScale => DimKind::Continuous,
                    Tunable::KernelSet => DimKind::Categorical,
                    _ => DimKind::Integer,
                };
                Dim::new(t.name(), lo, hi, kind)
            })
            .collect(),
    )
}

/// Position of `net` in the tuning space (filters scale 1; a kernel set not
/// in the list maps to the default set).
pub fn encode_config(dims: &[Tunable], net: &NetConfig) -> Vec<f64> {
    dims.iter()
        .map(|t| match t {
            Tunable::LearningRate => net.learning_rate.log10(),
            Tunable::BilstmUnits => net.bilstm_units as f64,
            Tunable::BatchSize => net.batch_size as f64,
            Tunable::FiltersScale => 1.0,
            Tunable::KernelSet => KERNEL_SETS
                .iter()
                .position(|k| *k == net.kernel_sizes.as_slice())
                .unwrap_or(2) as f64,
            Tunable::Window => net.window as f64,
        })
        .collect()
}

/// Apply a (snapped) position to `base`. Branch filter counts for a new
/// kernel set reuse the base counts in order, repeating the last.
pub fn apply_position(dims: &[Tunable], base: &NetConfig, x: &[f64]) -> NetConfig {
    let mut net = base.clone();
    let mut scale = 1.0;
    for (t, &v) in dims.iter().zip(x) {
        match t {
            Tunable::LearningRate => net.learning_rate = 10f64.powf(v),
            Tunable::BilstmUnits => net.bilstm_units = v.round().max(1.0) as usize,
            Tunable::BatchSize => net.batch_size = v.round().max(1.0) as usize,
            Tunable::FiltersScale => scale = v,
            Tunable::KernelSet => {
                let set = KERNEL_SETS[(v.round().max(0.0) as usize).min(KERNEL_SETS.len() - 1)];
                let last = *base.filters_per_branch.last().unwrap_or(&1);
                net.filters_per_branch = (0..set.len())
                    .map(|i| *base.filters_per_branch.get(i).unwrap_or(&last))
                    .collect();
                net.kernel_sizes = set.to_vec();
            }
            Tunable::Window => net.window = v.round().max(2.0) as usize,
        }
    }
    net.filters_per_branch = net
        .filters_per_branch
        .iter()
        .map(|&f| ((f as f64 * scale).round() as usize).max(1))
        .collect();
    net
}

/// Search the residual network's hyperparameters by minimizing its
/// validation MSE (residual units) on the decomposed training+validation
/// span. The untuned config is placed in the initial population, so the
/// result is never worse than the default under the same epoch cap.
pub fn tune(config: &PipelineConfig, frame: &FeatureFrame) -> Result<TuneOutcome> {
    config.validate()?;
    if !config.tuning.enabled {
        return Err(Error::Config("tuning is disabled (set tuning.enabled = true)".into()));
    }
    let sizes = super::check_lengths(config, frame.target.len())?;
    let fit = frame.target.slice(0..sizes.fit());
    let residual = stl_decompose(&fit, &config.decompose)
        .stage("decompose")?
        .residual
        .values;
    let dims = config.tuning.dims.clone();
    let base = NetConfig {
        max_epochs: config.tuning.epoch_cap.min(config.network.max_epochs),
        ..pipeline_net_config(config)
    };
    let space = search_space(config)?;

    let fitness = |x: &[f64]| -> Result<f64> {
        let net = apply_position(&dims, &base, x);
        if let Err(e) = net.validate() {
            log::debug!("infeasible candidate {x:?}: {e}");
            return Ok(f64::INFINITY);
        }
        let data = make_windows_from(&residual, net.window, net.val_fraction)?;
        if data.degenerate {
            return Err(Error::invalid("residual component is degenerate; nothing to tune"));
        }
        match train(&net, &data) {
            Ok((_, report)) => Ok(report.best_val_mse * data.scaler.std * data.scaler.std),
            Err(e) if e.kind() == ErrorKind::Numerical => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let mut incumbent = encode_config(&dims, &base);
    space.clamp(&mut incumbent);
    let default_val_mse = fitness(&space.snap(&incumbent)).stage("tuning")?;
    let result = Optimizer::new(&space, &config.tuning.optimizer)?
        .with_initial(vec![incumbent])?
        .run_parallel(fitness)
        .stage("tuning")?;

    let mut best_config = config.clone();
    best_config.network = NetConfig {
        max_epochs: config.network.max_epochs,
        val_fraction: config.network.val_fraction,
        ..apply_position(&dims, &base, &result.best_position)
    };
    Ok(TuneOutcome {
        assignment: space.format_assignment(&result.best_position),
        best_val_mse: result.best_fitness,
        default_val_mse,
        best_config,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_apply_roundtrip() {
        let dims = [
            Tunable::LearningRate,
            Tunable::BilstmUnits,
            Tunable::KernelSet,
            Tunable::FiltersScale,
            Tunable::Window,
        ];
        let base = NetConfig::default();
        let x = encode_config(&dims, &base);
        assert_eq!(apply_position(&dims, &base, &x), {
            let mut n = base.clone();
            n.learning_rate = 10f64.powf(1e-3f64.log10());
            n
        });
        let small = apply_position(&dims, &base, &[-2.0, 8.0, 1.0, 0.5, 12.0]);
        assert_eq!(small.kernel_sizes, vec![3, 5]);
        assert_eq!(small.filters_per_branch, vec![16, 32]);
        assert_eq!(small.window, 12);
        assert!((small.learning_rate - 0.01).abs() < 1e-15);
    }
}
