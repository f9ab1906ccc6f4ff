//! Hybrid forecasting toolkit for air-quality monitoring series.
//!
//! A pollutant series is split by an STL-style LOESS decomposition into
//! trend, seasonal and residual parts. The two smooth parts are forecast
//! with ARIMA models, the residual with a multi-scale convolutional BiLSTM
//! whose attention is gated by local residual volatility, and the three
//! forecasts are summed. Hyperparameters of the residual network can be
//! searched with [`uammo`], a population optimizer that blends five
//! metaheuristic displacement rules under decaying weights.
//!
//! Module map:
//!
//! * [`ingest`]: raw CSV loading, column merging, sparsity filtering,
//!   imputation, winsorization and calendar/lag features.
//! * [`decompose`]: LOESS smoothing and the STL-style decomposition.
//! * [`arima`]: CSS estimation, forecasting and simulation of ARIMA(p,d,q).
//! * [`residualnet`]: the residual network, its exact gradients and training.
//! * [`uammo`]: the unified adaptive metaheuristic optimizer.
//! * [`pipeline`]: metrics, the end-to-end run, tuning and reports.

// Numeric kernels index several buffers per loop, and `!(x > y)` is the
// NaN-rejecting comparison on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod arima;
pub mod decompose;
pub mod error;
pub mod ingest;
pub mod optim;
pub mod pipeline;
pub mod residualnet;
pub mod series;
pub mod uammo;

pub use error::{Error, ErrorKind, Result};
pub use series::TimeSeries;
