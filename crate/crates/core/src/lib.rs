//! Incremental Bayesian temporal matrix factorization for multivariate
//! sensor time series.
//!
//! The crate factors an M x T observation matrix with missing entries into
//! spatial and temporal latent factors, places a vector autoregression on
//! the temporal factors, and infers everything with a Gibbs sampler. On top
//! of the single-window sampler sit a rolling forecaster and a two-stage
//! incremental window scheduler that updates the model as data streams in
//! without full retraining.

pub mod error;
pub mod forecast;
pub mod gibbs;
pub mod incremental;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod samplers;
pub mod scenarios;
pub mod synth;

pub use error::{Error, Result};
pub use forecast::{
    forecast_step, rolling_forecast, ForecastOptions, PrecisionScope, RollingForecaster,
};
pub use gibbs::{run_imputation_chain, ChainConfig};
pub use incremental::{
    plan_windows, run_incremental, ImputationAccumulator, IncrementalResult, WindowPlan,
    WindowStage,
};
pub use model::{
    ar_mean, reconstruct, ARModel, FactorState, ObservationSet, PredictionKind, PredictionResult,
    PriorConfig, SpatialHyperState,
};
pub use rng::{RandomSource, RngBundle};
pub use scenarios::{
    accuracy, accuracy_at, apply_mask, generate_mask, masked_positions, MissingScenario,
    MissingSpec,
};
pub use synth::{generate_planted, SynthConfig};
