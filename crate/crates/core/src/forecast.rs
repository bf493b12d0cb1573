//! Rolling multi-step forecasting on top of a trained factorization.
//!
//! A forecast step maps the recent temporal factors through the AR model and
//! emits a per-channel mean and spread; after each step the actual
//! (possibly partially missing) column is ingested and the newest factor is
//! re-conditioned on it. The spatial factors and AR coefficients stay fixed
//! except for a periodic spatial refresh.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{
    precision_posterior, sample_spatial_factor, sample_spatial_hyperparams, ChainConfig,
};
use crate::linalg::{spd_inverse, symmetrize};
use crate::model::{
    lag_stack, ARModel, FactorState, MomentAccumulator, ObservationSet, PredictionKind,
    PredictionResult, PriorConfig,
};
use crate::rng::{RandomSource, RngBundle};
use crate::samplers::{sample_gamma, sample_inverse_wishart, sample_mvn_natural};

/// Which residuals feed the noise-precision resample while ingesting a new
/// column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionScope {
    /// Residuals over the whole working window.
    #[default]
    WholeWindow,
    /// Residuals of the newest column only.
    LatestColumn,
}

/// Knobs of the rolling forecaster.
#[derive(Debug, Clone, Default)]
pub struct ForecastOptions {
    /// Refresh the spatial factors every this many steps; 0 disables.
    pub refresh_interval: usize,
    pub precision_scope: PrecisionScope,
}

/// Posterior scale of the innovation covariance given one transition
/// residual: `Ψ0 + (x - m)(x - m)ᵀ`.
pub fn innovation_scale_posterior(
    x_t: &DVector<f64>,
    prior_mean: &DVector<f64>,
    psi0: &DMatrix<f64>,
) -> DMatrix<f64> {
    let r = x_t - prior_mean;
    let mut scale = psi0.clone();
    scale.ger(1.0, &r, &r, 1.0);
    symmetrize(&mut scale);
    scale
}

/// Resample the working innovation covariance from the newest transition
/// residual: a draw with inverse distributed W((Ψ0*)⁻¹, v0 + 1).
pub fn update_innovation_covariance(
    x_t: &DVector<f64>,
    z_t: &DVector<f64>,
    ar: &ARModel,
    prior: &PriorConfig,
    rng: &mut RandomSource,
) -> Result<DMatrix<f64>> {
    let prior_mean = ar.coeffs.tr_mul(z_t);
    let scale = innovation_scale_posterior(x_t, &prior_mean, &prior.psi0);
    sample_inverse_wishart(&scale, prior.v0 + 1.0, rng)
}

/// Natural parameters (precision, shift) of the current temporal factor
/// given the observed entries of its column, the AR prior mean, and the
/// working innovation covariance inverse.
pub fn current_factor_posterior(
    observed: &[(usize, f64)],
    spatial: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    sigma_tilde_inv: &DMatrix<f64>,
    tau: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut precision = sigma_tilde_inv.clone();
    let mut rhs = sigma_tilde_inv * prior_mean;
    for &(i, y) in observed {
        let u = spatial.column(i);
        precision.ger(tau, &u, &u, 1.0);
        rhs.axpy(tau * y, &u, 1.0);
    }
    symmetrize(&mut precision);
    (precision, rhs)
}

/// Draw the current temporal factor from its conditional posterior; with no
/// observed entries this reduces to the AR prior N(prior_mean, Σ̃).
pub fn sample_current_temporal_factor(
    observed: &[(usize, f64)],
    spatial: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    sigma_tilde: &DMatrix<f64>,
    tau: f64,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let sigma_tilde_inv = spd_inverse(sigma_tilde, "working innovation covariance")?;
    let (precision, rhs) =
        current_factor_posterior(observed, spatial, prior_mean, &sigma_tilde_inv, tau);
    sample_mvn_natural(&precision, &rhs, "current factor precision", rng)
}

/// One pure forecast emission for the column following `history`.
///
/// Assembles `z_next` from the recent factors and collects
/// `Uᵀ(Aᵀ z_next)` after burn-in while cycling the working innovation
/// covariance from the latest transition residual (when the history is deep
/// enough to expose one) and drawing the provisional next factor under it.
/// The collected statistic depends only on the fixed history, so the
/// emitted mean is the exact AR map and the spread collapses to zero; the
/// returned `x_next` draw carries the innovation uncertainty forward
/// instead.
pub fn forecast_step(
    spatial: &DMatrix<f64>,
    ar: &ARModel,
    history: &DMatrix<f64>,
    prior: &PriorConfig,
    n_iters: usize,
    burn_in: usize,
    rng: &mut RandomSource,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let h = history.ncols();
    let max_lag = ar.max_lag();
    if h < max_lag {
        return Err(Error::InsufficientHistory {
            needed: max_lag,
            actual: h,
        });
    }
    if burn_in >= n_iters {
        return Err(Error::Config(format!(
            "forecast burn-in {burn_in} must be below chain length {n_iters}"
        )));
    }
    let m = spatial.ncols();
    let mut acc = MomentAccumulator::new(m, 1);
    let mut sigma_tilde = ar.innovation_cov.clone();

    // residual of the newest known transition, when assemblable
    let residual_context = if h > max_lag {
        let z_last = lag_stack(history, &ar.lags, h - 1)?;
        let prior_mean_last = ar.coeffs.tr_mul(&z_last);
        Some((history.column(h - 1).clone_owned(), prior_mean_last))
    } else {
        None
    };

    let z_next = lag_stack(history, &ar.lags, h)?;
    let prior_mean_next = ar.coeffs.tr_mul(&z_next);
    let yhat = spatial.tr_mul(&prior_mean_next);
    let yhat_col = DMatrix::from_iterator(m, 1, yhat.iter().copied());
    let mut x_next = prior_mean_next.clone();

    for iter in 0..n_iters {
        if let Some((x_last, pm_last)) = &residual_context {
            let scale = innovation_scale_posterior(x_last, pm_last, &prior.psi0);
            sigma_tilde = sample_inverse_wishart(&scale, prior.v0 + 1.0, rng)?;
        }
        x_next =
            sample_current_temporal_factor(&[], spatial, &prior_mean_next, &sigma_tilde, 0.0, rng)?;
        if iter >= burn_in {
            acc.push(&yhat_col);
        }
    }

    let result = acc.finish(PredictionKind::Forecast);
    Ok((
        result.mean.column(0).clone_owned(),
        result.std.column(0).clone_owned(),
        x_next,
    ))
}

/// Owns the rolling state of a multi-step forecast: fixed AR model, spatial
/// factors (periodically refreshed), and the working window of factors and
/// ingested columns.
#[derive(Debug, Clone)]
pub struct RollingForecaster {
    spatial: DMatrix<f64>,
    ar: ARModel,
    history: DMatrix<f64>,
    buf_values: DMatrix<f64>,
    buf_mask: DMatrix<u8>,
    window_len: usize,
    tau: f64,
    prior: PriorConfig,
    opts: ForecastOptions,
}

impl RollingForecaster {
    pub fn new(
        state: &FactorState,
        ar: ARModel,
        window_obs: &ObservationSet,
        prior: PriorConfig,
        opts: ForecastOptions,
    ) -> Result<Self> {
        if state.n_channels() != window_obs.n_channels()
            || state.n_columns() != window_obs.n_columns()
        {
            return Err(Error::ShapeMismatch(format!(
                "factor state is {}x{} / {}x{} for a {}x{} window",
                state.rank(),
                state.n_channels(),
                state.rank(),
                state.n_columns(),
                window_obs.n_channels(),
                window_obs.n_columns()
            )));
        }
        if ar.rank() != state.rank() {
            return Err(Error::ShapeMismatch(
                "AR model rank differs from factor rank".into(),
            ));
        }
        if window_obs.n_columns() <= ar.max_lag() {
            return Err(Error::InsufficientHistory {
                needed: ar.max_lag(),
                actual: window_obs.n_columns(),
            });
        }
        Ok(Self {
            spatial: state.spatial.clone(),
            history: state.temporal.clone(),
            buf_values: window_obs.values().clone(),
            buf_mask: window_obs.mask().clone(),
            window_len: window_obs.n_columns(),
            tau: state.noise_precision,
            ar,
            prior,
            opts,
        })
    }

    /// Current spatial factors (after any refreshes).
    pub fn spatial(&self) -> &DMatrix<f64> {
        &self.spatial
    }

    /// Current noise precision.
    pub fn noise_precision(&self) -> f64 {
        self.tau
    }

    /// Append a factor column and its data column, sliding the window.
    fn push_column(&mut self, x: &DVector<f64>, col_values: DVector<f64>, col_mask: Vec<u8>) {
        let k = self.history.nrows();
        let m = self.buf_values.nrows();
        let h = self.history.ncols();
        let mut history = DMatrix::zeros(k, h + 1);
        history.columns_mut(0, h).copy_from(&self.history);
        history.set_column(h, x);
        let mut values = DMatrix::zeros(m, h + 1);
        values.columns_mut(0, h).copy_from(&self.buf_values);
        values.set_column(h, &col_values);
        let mut mask = DMatrix::zeros(m, h + 1);
        mask.columns_mut(0, h).copy_from(&self.buf_mask);
        for i in 0..m {
            mask[(i, h)] = col_mask[i];
        }
        if h + 1 > self.window_len {
            let drop = h + 1 - self.window_len;
            history = history.columns(drop, self.window_len).into_owned();
            values = values.columns(drop, self.window_len).into_owned();
            mask = mask.columns(drop, self.window_len).into_owned();
        }
        self.history = history;
        self.buf_values = values;
        self.buf_mask = mask;
    }

    /// Re-condition the newest factor on its ingested column and resample
    /// the working innovation covariance and the noise precision.
    fn condition_latest(
        &mut self,
        observed: &[(usize, f64)],
        chain: &ChainConfig,
        rng: &mut RandomSource,
    ) -> Result<()> {
        let h = self.history.ncols();
        let z = lag_stack(&self.history, &self.ar.lags, h - 1)?;
        let prior_mean = self.ar.coeffs.tr_mul(&z);
        let mut x_cur = self.history.column(h - 1).clone_owned();
        for _ in 0..chain.n_iters_forecast {
            let scale = innovation_scale_posterior(&x_cur, &prior_mean, &self.prior.psi0);
            let sigma_tilde = sample_inverse_wishart(&scale, self.prior.v0 + 1.0, rng)?;
            x_cur = sample_current_temporal_factor(
                observed,
                &self.spatial,
                &prior_mean,
                &sigma_tilde,
                self.tau,
                rng,
            )?;
            self.history.set_column(h - 1, &x_cur);
            self.tau = self.resample_precision(observed, rng)?;
        }
        Ok(())
    }

    fn resample_precision(&self, observed: &[(usize, f64)], rng: &mut RandomSource) -> Result<f64> {
        let (shape, rate) = match self.opts.precision_scope {
            PrecisionScope::WholeWindow => precision_posterior(
                &self.buf_values,
                &self.buf_mask,
                &self.spatial,
                &self.history,
                &self.prior,
            ),
            PrecisionScope::LatestColumn => {
                let h = self.history.ncols();
                let x = self.history.column(h - 1);
                let mut sq = 0.0;
                for &(i, y) in observed {
                    let r = y - self.spatial.column(i).dot(&x);
                    sq += r * r;
                }
                (
                    self.prior.a0 + observed.len() as f64 / 2.0,
                    self.prior.b0 + 0.5 * sq,
                )
            }
        };
        sample_gamma(shape, rate, rng)
    }

    /// Resample the spatial hyper-parameters and every spatial factor over
    /// the working window, channels in parallel on their own streams.
    fn refresh_spatial(&mut self, rngs: &mut RngBundle) -> Result<()> {
        let m = self.spatial.ncols();
        let hyper = sample_spatial_hyperparams(&self.spatial, &self.prior, &mut rngs.master)?;
        let (values, mask, history, tau) =
            (&self.buf_values, &self.buf_mask, &self.history, self.tau);
        let new_cols: Vec<DVector<f64>> = rngs.channels[..m]
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| sample_spatial_factor(i, values, mask, history, &hyper, tau, rng))
            .collect::<Result<_>>()?;
        for (i, col) in new_cols.iter().enumerate() {
            self.spatial.set_column(i, col);
        }
        Ok(())
    }

    /// Run the forecast over `horizon` steps. `future`, when present,
    /// supplies the actual columns to ingest (column `s` of `future` is
    /// forecast step `s`); steps beyond its width ingest fully missing
    /// columns.
    pub fn run(
        &mut self,
        future: Option<&ObservationSet>,
        horizon: usize,
        chain: &ChainConfig,
        rngs: &mut RngBundle,
    ) -> Result<PredictionResult> {
        if horizon < 1 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        chain.validate()?;
        if let Some(f) = future {
            if f.n_channels() != self.spatial.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "future columns have {} channels, window has {}",
                    f.n_channels(),
                    self.spatial.ncols()
                )));
            }
        }
        let m = self.spatial.ncols();
        let mut mean = DMatrix::zeros(m, horizon);
        let mut std = DMatrix::zeros(m, horizon);

        for s in 0..horizon {
            let (f_mean, f_std, x_prov) = forecast_step(
                &self.spatial,
                &self.ar,
                &self.history,
                &self.prior,
                chain.n_iters_forecast,
                chain.burn_in_forecast,
                &mut rngs.master,
            )?;
            mean.set_column(s, &f_mean);
            std.set_column(s, &f_std);

            let (col_values, col_mask, observed) = match future {
                Some(f) if s < f.n_columns() => {
                    let vals = f.values().column(s).clone_owned();
                    let cmask: Vec<u8> = (0..m).map(|i| f.mask()[(i, s)]).collect();
                    let observed: Vec<(usize, f64)> = f.observed_in_col(s).collect();
                    (vals, cmask, observed)
                }
                _ => (DVector::from_element(m, f64::NAN), vec![0u8; m], Vec::new()),
            };
            self.push_column(&x_prov, col_values, col_mask);
            self.condition_latest(&observed, chain, &mut rngs.master)?;

            if self.opts.refresh_interval > 0 && (s + 1) % self.opts.refresh_interval == 0 {
                self.refresh_spatial(rngs)?;
            }
        }

        Ok(PredictionResult {
            mean,
            std,
            n_samples: chain.forecast_samples(),
            kind: PredictionKind::Forecast,
        })
    }
}

/// Rolling multi-step forecast over `horizon` columns following the trained
/// window, ingesting the supplied future columns as they "arrive".
#[allow(clippy::too_many_arguments)]
pub fn rolling_forecast(
    window_obs: &ObservationSet,
    state: &FactorState,
    ar: ARModel,
    future: Option<&ObservationSet>,
    horizon: usize,
    prior: &PriorConfig,
    opts: &ForecastOptions,
    chain: &ChainConfig,
    rngs: &mut RngBundle,
) -> Result<PredictionResult> {
    let mut forecaster =
        RollingForecaster::new(state, ar, window_obs, prior.clone(), opts.clone())?;
    forecaster.run(future, horizon, chain, rngs)
}
