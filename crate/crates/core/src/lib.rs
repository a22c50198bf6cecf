//! Calibration and simulation engine for a cascade of annual economic
//! time-series models: inflation, dividend yields, dividends, long and short
//! nominal rates and inflation-linked bond yields.
//!
//! The usual flow is [`data`] (load and transform raw series), [`estimation`]
//! (maximum-likelihood fits), [`diagnostics`] (residual checks) and
//! [`simulation`] (seeded scenario sets, forecast fans, backtests).

// `!(x > 0.0)` is used on purpose so NaN fails the check; matrix code
// indexes by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod models;
pub mod simulation;

pub use data::{AnnualSeries, Unit};
pub use error::{Error, Result};
pub use estimation::{fit, fit_cascade, FitOptions, FitResult, OptimizerConfig};
pub use models::{CascadeState, DataBundle, ModelParams, ModelSpec, ParamSet, Series, Variant};
pub use simulation::{simulate, CascadeModels, ScenarioSet, SimulationConfig};

/// Version of the engine, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
