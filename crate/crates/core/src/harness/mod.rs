//! Experiment configs, convergence curves, constant fitting and the
//! command-line front end.

mod cli;
mod config;
mod curve;
mod experiment;
mod fit;

pub use cli::{run, Cli, Format, RatesOp, Verb, EXIT_SOFTWARE, EXIT_USAGE};
pub use config::{
    constant_start, decimal_start, load_any, BoundConfig, DriftConfig, DsmallConfig,
    ExperimentConfig, LyapunovSpec, Mode, ModelSpec, Observable, PointFn, RateConfig, SampledPairs,
};
pub use curve::{ConvergenceCurve, CurveRow, FitResult, SCHEMA_VERSION};
pub use experiment::{
    chain_paths, run_convergence_experiment, sdde_paths, SURROGATE_HORIZON, SURROGATE_SAMPLES,
};
pub use fit::{attach_bound, fit_rate_constants, MIN_FIT_POINTS};
