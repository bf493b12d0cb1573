//! Run configuration: defaults, flat key=value config files, and flag
//! overrides (flags win over file values).

use std::path::{Path, PathBuf};

use btmf_core::{ChainConfig, ForecastOptions, PrecisionScope, PriorConfig};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult, ErrorClass};

/// Scalar overrides expanded onto the structured prior at build time.
#[derive(Debug, Clone, Default)]
pub struct PriorOverrides {
    pub mu0: Option<f64>,
    pub beta0: Option<f64>,
    pub w0: Option<f64>,
    pub v0: Option<f64>,
    pub lambda0: Option<f64>,
    pub row_cov0: Option<f64>,
    pub psi0: Option<f64>,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
}

/// Everything a pipeline run needs beyond its input data.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub rank: usize,
    pub lags: Vec<usize>,
    pub chain: ChainConfig,
    /// Window increment I in columns.
    pub increment: usize,
    /// Critical length T1 in columns (multiple of the increment).
    pub critical_len: usize,
    /// Trailing forecast horizon in columns.
    pub horizon: usize,
    /// Spatial refresh cadence during forecasting (default: the increment).
    pub refresh_interval: Option<usize>,
    pub precision_scope: PrecisionScope,
    pub prior: PriorOverrides,
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            lags: vec![1, 3],
            chain: ChainConfig::default(),
            increment: 4320,
            critical_len: 12 * 4320,
            horizon: 0,
            refresh_interval: None,
            precision_scope: PrecisionScope::WholeWindow,
            prior: PriorOverrides::default(),
            input: None,
            out_dir: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError {
        class: ErrorClass::Data,
        message: format!("config key {key}: cannot parse {value:?}: {e}"),
    })
}

/// Parse a comma-separated lag list like `1,3,144`.
pub fn parse_lags(text: &str) -> CliResult<Vec<usize>> {
    let lags: Vec<usize> = text
        .split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|e| CliError {
                class: ErrorClass::Data,
                message: format!("bad lag {p:?}: {e}"),
            })
        })
        .collect::<CliResult<_>>()?;
    btmf_core::model::validate_lags(&lags).map_err(CliError::from)?;
    Ok(lags)
}

impl RunConfig {
    /// Apply one dotted-key assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "rank" => self.rank = parse(key, value)?,
            "lags" => self.lags = parse_lags(value)?,
            "seed" => self.chain.seed = parse(key, value)?,
            "chain.n_iters_impute" => self.chain.n_iters_impute = parse(key, value)?,
            "chain.burn_in_impute" => self.chain.burn_in_impute = parse(key, value)?,
            "chain.n_iters_forecast" => self.chain.n_iters_forecast = parse(key, value)?,
            "chain.burn_in_forecast" => self.chain.burn_in_forecast = parse(key, value)?,
            "window.increment" => self.increment = parse(key, value)?,
            "window.critical_length" => self.critical_len = parse(key, value)?,
            "forecast.horizon" => self.horizon = parse(key, value)?,
            "forecast.refresh_interval" => {
                self.refresh_interval = Some(parse(key, value)?);
            }
            "forecast.precision_scope" => {
                self.precision_scope = match value {
                    "window" => PrecisionScope::WholeWindow,
                    "column" => PrecisionScope::LatestColumn,
                    other => {
                        return Err(CliError {
                            class: ErrorClass::Data,
                            message: format!(
                                "forecast.precision_scope must be window or column, got {other:?}"
                            ),
                        })
                    }
                }
            }
            "prior.mu0" => self.prior.mu0 = Some(parse(key, value)?),
            "prior.beta0" => self.prior.beta0 = Some(parse(key, value)?),
            "prior.w0" => self.prior.w0 = Some(parse(key, value)?),
            "prior.v0" => self.prior.v0 = Some(parse(key, value)?),
            "prior.lambda0" => self.prior.lambda0 = Some(parse(key, value)?),
            "prior.row_cov0" => self.prior.row_cov0 = Some(parse(key, value)?),
            "prior.psi0" => self.prior.psi0 = Some(parse(key, value)?),
            "prior.a0" => self.prior.a0 = Some(parse(key, value)?),
            "prior.b0" => self.prior.b0 = Some(parse(key, value)?),
            "io.input" => self.input = Some(PathBuf::from(value)),
            "io.out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => {
                return Err(CliError {
                    class: ErrorClass::Data,
                    message: format!("unknown config key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Load assignments from a flat config file (`key = value`, `#`
    /// comments).
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError {
            class: ErrorClass::Data,
            message: format!("cannot read config {}: {e}", path.display()),
        })?;
        for (lno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError {
                    class: ErrorClass::Data,
                    message: format!(
                        "config {} line {}: expected key=value",
                        path.display(),
                        lno + 1
                    ),
                });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Expand defaults plus scalar overrides into the full prior for the
    /// configured rank and lag order.
    pub fn build_prior(&self) -> PriorConfig {
        let k = self.rank;
        let d = self.lags.len();
        let mut prior = PriorConfig::default_for(k, d);
        let o = &self.prior;
        if let Some(v) = o.mu0 {
            prior.mu0 = DVector::from_element(k, v);
        }
        if let Some(v) = o.beta0 {
            prior.beta0 = v;
        }
        if let Some(v) = o.w0 {
            prior.w0 = DMatrix::identity(k, k) * v;
        }
        if let Some(v) = o.v0 {
            prior.v0 = v;
        }
        if let Some(v) = o.lambda0 {
            prior.lambda0 = DMatrix::from_element(k * d, k, v);
        }
        if let Some(v) = o.row_cov0 {
            prior.row_cov0 = DMatrix::identity(k * d, k * d) * v;
        }
        if let Some(v) = o.psi0 {
            prior.psi0 = DMatrix::identity(k, k) * v;
        }
        if let Some(v) = o.a0 {
            prior.a0 = v;
        }
        if let Some(v) = o.b0 {
            prior.b0 = v;
        }
        prior
    }

    /// Forecast options with the refresh cadence defaulting to the window
    /// increment.
    pub fn forecast_options(&self) -> ForecastOptions {
        ForecastOptions {
            refresh_interval: self.refresh_interval.unwrap_or(self.increment),
            precision_scope: self.precision_scope,
        }
    }
}

/// Assemble the effective config: defaults, then file, then flags.
pub fn load_config(args: &crate::args::PipelineArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for assignment in &args.set {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(CliError {
                class: ErrorClass::Usage,
                message: format!("--set expects KEY=VALUE, got {assignment:?}"),
            });
        };
        cfg.apply(key.trim(), value.trim()).map_err(|e| CliError {
            class: ErrorClass::Usage,
            message: e.message,
        })?;
    }
    if let Some(seed) = args.seed {
        cfg.chain.seed = seed;
    }
    if let Some(rank) = args.rank {
        cfg.rank = rank;
    }
    if let Some(lags) = &args.lags {
        cfg.lags = parse_lags(lags)?;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.input = Some(args.input.clone());
    cfg.out_dir = Some(args.out_dir.clone());
    Ok(cfg)
}
