//! Conditional-posterior updates and the imputation chain.
//!
//! Each conditional's parameter computation is a deterministic pure function
//! over `(values, mask, factors, ...)`, separated from the draw so it can be
//! tested against dense oracles without touching a random source. Masked
//! entries never enter any sum.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};
use crate::model::{
    lag_stack, ARModel, FactorState, MomentAccumulator, ObservationSet, PredictionKind,
    PredictionResult, PriorConfig, SpatialHyperState,
};
use crate::rng::{RandomSource, RngBundle};
use crate::samplers::{
    sample_gamma, sample_inverse_wishart, sample_matrix_normal, sample_mvn_natural,
    sample_mvn_precision, sample_wishart,
};

/// Chain lengths and burn-in for the imputation and forecasting stages.
///
/// Iterations are 0-indexed; samples are collected once the iteration index
/// reaches the burn-in, so a chain of `burn_in + 1` iterations collects
/// exactly one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub n_iters_impute: usize,
    pub burn_in_impute: usize,
    pub n_iters_forecast: usize,
    pub burn_in_forecast: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in_impute >= self.n_iters_impute {
            return Err(Error::Config(format!(
                "imputation burn-in {} must be below chain length {}",
                self.burn_in_impute, self.n_iters_impute
            )));
        }
        if self.burn_in_forecast >= self.n_iters_forecast {
            return Err(Error::Config(format!(
                "forecast burn-in {} must be below chain length {}",
                self.burn_in_forecast, self.n_iters_forecast
            )));
        }
        Ok(())
    }

    /// Samples collected by the imputation stage.
    pub fn impute_samples(&self) -> usize {
        self.n_iters_impute - self.burn_in_impute
    }

    /// Samples collected per forecast step.
    pub fn forecast_samples(&self) -> usize {
        self.n_iters_forecast - self.burn_in_forecast
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iters_impute: 50,
            burn_in_impute: 10,
            n_iters_forecast: 20,
            burn_in_forecast: 5,
            seed: 0,
        }
    }
}

/// Posterior of the Gaussian-Wishart hyper-prior over spatial factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWishartPosterior {
    /// Posterior mean location.
    pub mean: DVector<f64>,
    /// Posterior precision multiplier.
    pub beta: f64,
    /// Posterior degrees of freedom.
    pub dof: f64,
    /// Inverse of the posterior Wishart scale.
    pub inv_scale: DMatrix<f64>,
}

/// Posterior of the matrix-normal inverse-Wishart hyper-prior over the AR
/// coefficients and innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MniwPosterior {
    /// Posterior coefficient mean ((K d) x K).
    pub mean: DMatrix<f64>,
    /// Posterior row covariance ((K d) x (K d)).
    pub row_cov: DMatrix<f64>,
    /// Posterior degrees of freedom.
    pub dof: f64,
    /// Posterior inverse-Wishart scale (K x K).
    pub scale: DMatrix<f64>,
}

/// Column mean and scatter of the spatial factors.
fn column_stats(u: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (k, m) = (u.nrows(), u.ncols());
    let mut mean = DVector::zeros(k);
    for i in 0..m {
        mean += u.column(i);
    }
    mean /= m as f64;
    let mut scatter = DMatrix::zeros(k, k);
    for i in 0..m {
        let d = u.column(i) - &mean;
        scatter.ger(1.0, &d, &d, 1.0);
    }
    scatter /= m as f64;
    (mean, scatter)
}

/// Gaussian-Wishart posterior over the spatial hyper-parameters given the
/// current spatial factor columns.
pub fn spatial_hyper_posterior(
    u: &DMatrix<f64>,
    prior: &PriorConfig,
) -> Result<GaussianWishartPosterior> {
    let m = u.ncols() as f64;
    let (u_bar, scatter) = column_stats(u);
    let beta = prior.beta0 + m;
    let dof = prior.v0 + m;
    let mean = (&prior.mu0 * prior.beta0 + &u_bar * m) / beta;
    let mut inv_scale = spd_inverse(&prior.w0, "spatial prior scale W0")?;
    inv_scale += scatter * m;
    let diff = &prior.mu0 - &u_bar;
    inv_scale.ger(prior.beta0 * m / beta, &diff, &diff, 1.0);
    symmetrize(&mut inv_scale);
    Ok(GaussianWishartPosterior {
        mean,
        beta,
        dof,
        inv_scale,
    })
}

/// Draw (μ_u, Λ_u) from their Gaussian-Wishart posterior.
pub fn sample_spatial_hyperparams(
    u: &DMatrix<f64>,
    prior: &PriorConfig,
    rng: &mut RandomSource,
) -> Result<SpatialHyperState> {
    let post = spatial_hyper_posterior(u, prior)?;
    let scale = spd_inverse(&post.inv_scale, "spatial posterior scale")?;
    let precision = sample_wishart(&scale, post.dof, rng)?;
    let mean = sample_mvn_precision(
        &post.mean,
        &(&precision * post.beta),
        "spatial hyper-mean precision",
        rng,
    )?;
    Ok(SpatialHyperState { mean, precision })
}

/// Natural parameters (precision, shift) of one spatial factor's conditional
/// posterior. Sums run over observed time stamps of the channel only; a
/// fully unobserved channel falls back to its prior.
pub fn spatial_factor_posterior(
    channel: usize,
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    temporal: &DMatrix<f64>,
    hyper: &SpatialHyperState,
    tau: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = temporal.nrows();
    let mut precision = hyper.precision.clone();
    let mut rhs = &hyper.precision * &hyper.mean;
    let mut data_term = DMatrix::zeros(k, k);
    for t in 0..values.ncols() {
        if mask[(channel, t)] == 1 {
            let x = temporal.column(t);
            data_term.ger(1.0, &x, &x, 1.0);
            rhs.axpy(tau * values[(channel, t)], &x, 1.0);
        }
    }
    precision += data_term * tau;
    symmetrize(&mut precision);
    (precision, rhs)
}

/// Draw the spatial factor of one channel from its conditional posterior.
pub fn sample_spatial_factor(
    channel: usize,
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    temporal: &DMatrix<f64>,
    hyper: &SpatialHyperState,
    tau: f64,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let (precision, rhs) = spatial_factor_posterior(channel, values, mask, temporal, hyper, tau);
    sample_mvn_natural(
        &precision,
        &rhs,
        &format!("spatial factor precision for channel {channel}"),
        rng,
    )
}

/// Matrix-normal inverse-Wishart posterior over (A, Σ) given the temporal
/// factors: regresses columns `x_{l_d}, ..., x_{T-1}` on their lag stacks.
pub fn temporal_hyper_posterior(
    temporal: &DMatrix<f64>,
    lags: &[usize],
    prior: &PriorConfig,
) -> Result<MniwPosterior> {
    crate::model::validate_lags(lags)?;
    let t_len = temporal.ncols();
    let max_lag = *lags.last().expect("non-empty lags");
    if t_len <= max_lag {
        return Err(Error::InsufficientHistory {
            needed: max_lag,
            actual: t_len,
        });
    }
    let k = temporal.nrows();
    let d = lags.len();
    let rows = t_len - max_lag;

    // P stacks the regressed columns, Q their lag stacks, one row per stamp.
    let mut p = DMatrix::zeros(rows, k);
    let mut q = DMatrix::zeros(rows, k * d);
    for (row, t) in (max_lag..t_len).enumerate() {
        p.row_mut(row).tr_copy_from(&temporal.column(t));
        let z = lag_stack(temporal, lags, t)?;
        q.row_mut(row).tr_copy_from(&z);
    }

    let row_prec0 = spd_inverse(&prior.row_cov0, "AR prior row covariance V0")?;
    let mut row_prec = &row_prec0 + q.tr_mul(&q);
    symmetrize(&mut row_prec);
    let row_cov = spd_inverse(&row_prec, "AR posterior row precision")?;
    // shift = V0⁻¹ Λ0 + Qᵀ P; mean = V0* shift, and the scale update reuses
    // meanᵀ shift = (Λ0*)ᵀ (V0*)⁻¹ Λ0* to avoid a second inversion.
    let shift = &row_prec0 * &prior.lambda0 + q.tr_mul(&p);
    let mean = &row_cov * &shift;
    let dof = prior.v0 + rows as f64;
    let mut scale =
        &prior.psi0 + p.tr_mul(&p) + prior.lambda0.tr_mul(&(&row_prec0 * &prior.lambda0))
            - mean.tr_mul(&shift);
    symmetrize(&mut scale);
    Ok(MniwPosterior {
        mean,
        row_cov,
        dof,
        scale,
    })
}

/// Draw (A, Σ) from their matrix-normal inverse-Wishart posterior.
pub fn sample_temporal_hyperparams(
    temporal: &DMatrix<f64>,
    lags: &[usize],
    prior: &PriorConfig,
    rng: &mut RandomSource,
) -> Result<ARModel> {
    let post = temporal_hyper_posterior(temporal, lags, prior)?;
    let innovation_cov = sample_inverse_wishart(&post.scale, post.dof, rng)?;
    let coeffs = sample_matrix_normal(&post.mean, &post.row_cov, &innovation_cov, rng)?;
    ARModel::new(lags.to_vec(), coeffs, innovation_cov)
}

/// Natural parameters (precision, shift) of one temporal factor's
/// conditional posterior: the observation term over observed channels, the
/// forward AR couplings to every later column this one feeds, and the
/// backward AR prior (identity/zero inside the warm-up region).
///
/// `sigma_inv` is the inverse innovation covariance, passed in because it is
/// constant across one sweep.
#[allow(clippy::too_many_arguments)]
pub fn temporal_factor_posterior(
    t: usize,
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    spatial: &DMatrix<f64>,
    temporal: &DMatrix<f64>,
    ar: &ARModel,
    sigma_inv: &DMatrix<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = spatial.nrows();
    let t_len = temporal.ncols();
    let max_lag = ar.max_lag();
    if t >= t_len {
        return Err(Error::OutOfRange {
            index: t,
            reason: format!("only {t_len} factor columns available"),
        });
    }

    let mut precision = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);

    // observation term over observed channels of column t
    for i in 0..values.nrows() {
        if mask[(i, t)] == 1 {
            let u = spatial.column(i);
            precision.ger(tau, &u, &u, 1.0);
            rhs.axpy(tau * values[(i, t)], &u, 1.0);
        }
    }

    // forward couplings: columns s = t + l_j that are themselves AR-modeled.
    // The stacked coefficients hold the transposes of the per-lag transition
    // matrices, so the effective matrix applied to x_{s-l_p} is block(p)ᵀ.
    for (j, &lj) in ar.lags.iter().enumerate() {
        let s = t + lj;
        if s >= max_lag && s < t_len {
            let effective_j = ar.block(j).transpose();
            let sinv_aj = sigma_inv * &effective_j;
            precision += effective_j.tr_mul(&sinv_aj);
            // phi = x_s minus the other lags' contributions to x_s
            let mut phi = temporal.column(s).clone_owned();
            for (p_idx, &lp) in ar.lags.iter().enumerate() {
                if p_idx != j {
                    phi.gemv_tr(-1.0, &ar.block(p_idx), &temporal.column(s - lp), 1.0);
                }
            }
            rhs += sinv_aj.tr_mul(&phi);
        }
    }

    // backward branch
    if t < max_lag {
        for i in 0..k {
            precision[(i, i)] += 1.0;
        }
    } else {
        precision += sigma_inv;
        let z = lag_stack(temporal, &ar.lags, t)?;
        let prior_mean = ar.coeffs.tr_mul(&z);
        rhs += sigma_inv * prior_mean;
    }

    symmetrize(&mut precision);
    Ok((precision, rhs))
}

/// Draw the temporal factor of one column from its conditional posterior.
#[allow(clippy::too_many_arguments)]
pub fn sample_temporal_factor(
    t: usize,
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    spatial: &DMatrix<f64>,
    temporal: &DMatrix<f64>,
    ar: &ARModel,
    sigma_inv: &DMatrix<f64>,
    tau: f64,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let (precision, rhs) =
        temporal_factor_posterior(t, values, mask, spatial, temporal, ar, sigma_inv, tau)?;
    sample_mvn_natural(
        &precision,
        &rhs,
        &format!("temporal factor precision at column {t}"),
        rng,
    )
}

/// Gamma posterior (shape, rate) of the noise precision from the residuals
/// at observed entries.
pub fn precision_posterior(
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    spatial: &DMatrix<f64>,
    temporal: &DMatrix<f64>,
    prior: &PriorConfig,
) -> (f64, f64) {
    let mut n_obs = 0usize;
    let mut sq_sum = 0.0;
    for t in 0..values.ncols() {
        let x = temporal.column(t);
        for i in 0..values.nrows() {
            if mask[(i, t)] == 1 {
                let fitted = spatial.column(i).dot(&x);
                let r = values[(i, t)] - fitted;
                sq_sum += r * r;
                n_obs += 1;
            }
        }
    }
    (prior.a0 + n_obs as f64 / 2.0, prior.b0 + 0.5 * sq_sum)
}

/// Draw the noise precision from its Gamma posterior.
pub fn sample_precision(
    values: &DMatrix<f64>,
    mask: &DMatrix<u8>,
    spatial: &DMatrix<f64>,
    temporal: &DMatrix<f64>,
    prior: &PriorConfig,
    rng: &mut RandomSource,
) -> Result<f64> {
    let (shape, rate) = precision_posterior(values, mask, spatial, temporal, prior);
    sample_gamma(shape, rate, rng)
}

/// RMSE of the reconstruction against observed entries.
pub fn observed_rmse(values: &DMatrix<f64>, mask: &DMatrix<u8>, estimate: &DMatrix<f64>) -> f64 {
    let mut n = 0usize;
    let mut sq = 0.0;
    for t in 0..values.ncols() {
        for i in 0..values.nrows() {
            if mask[(i, t)] == 1 {
                let r = values[(i, t)] - estimate[(i, t)];
                sq += r * r;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

/// Run the imputation Gibbs chain.
///
/// One sweep samples, in order: the spatial hyper-parameters, every spatial
/// factor (channels in parallel on their own streams), the AR
/// hyper-parameters, every temporal factor (sequential in t), and the noise
/// precision. After burn-in each sweep's reconstruction `Uᵀ X` is folded
/// into a running mean/second-moment accumulator over every entry.
pub fn run_imputation_chain(
    obs: &ObservationSet,
    init: FactorState,
    lags: &[usize],
    prior: &PriorConfig,
    chain: &ChainConfig,
    rngs: &mut RngBundle,
) -> Result<(FactorState, ARModel, PredictionResult)> {
    chain.validate()?;
    crate::model::validate_lags(lags)?;
    let (m, t_len) = (obs.n_channels(), obs.n_columns());
    let k = init.rank();
    prior.validate(k, lags.len())?;
    if init.n_channels() != m || init.n_columns() != t_len {
        return Err(Error::ShapeMismatch(format!(
            "initial factors are {}x{} / {}x{} for a {m}x{t_len} observation set",
            k,
            init.n_channels(),
            k,
            init.n_columns()
        )));
    }
    let max_lag = *lags.last().expect("non-empty lags");
    if t_len <= max_lag {
        return Err(Error::InsufficientHistory {
            needed: max_lag,
            actual: t_len,
        });
    }
    if rngs.channels.len() < m {
        return Err(Error::Config(format!(
            "rng bundle has {} channel streams for {m} channels",
            rngs.channels.len()
        )));
    }

    let values = obs.values();
    let mask = obs.mask();
    let mut spatial = init.spatial;
    let mut temporal = init.temporal;
    let mut tau = init.noise_precision;
    let mut ar: Option<ARModel> = None;
    let mut acc = MomentAccumulator::new(m, t_len);

    for iter in 0..chain.n_iters_impute {
        let step = (|| -> Result<()> {
            let hyper = sample_spatial_hyperparams(&spatial, prior, &mut rngs.master)?;

            let new_cols: Vec<DVector<f64>> = rngs.channels[..m]
                .par_iter_mut()
                .enumerate()
                .map(|(i, rng)| sample_spatial_factor(i, values, mask, &temporal, &hyper, tau, rng))
                .collect::<Result<_>>()?;
            for (i, col) in new_cols.iter().enumerate() {
                spatial.set_column(i, col);
            }

            let model = sample_temporal_hyperparams(&temporal, lags, prior, &mut rngs.master)?;
            let sigma_inv = spd_inverse(&model.innovation_cov, "innovation covariance")?;
            for t in 0..t_len {
                let col = sample_temporal_factor(
                    t,
                    values,
                    mask,
                    &spatial,
                    &temporal,
                    &model,
                    &sigma_inv,
                    tau,
                    &mut rngs.master,
                )?;
                temporal.set_column(t, &col);
            }
            ar = Some(model);

            tau = sample_precision(values, mask, &spatial, &temporal, prior, &mut rngs.master)?;
            Ok(())
        })();
        step.map_err(|e| e.at_iteration(iter))?;

        if iter >= chain.burn_in_impute {
            let estimate = spatial.tr_mul(&temporal);
            if log::log_enabled!(target: "btmf::gibbs", log::Level::Debug) {
                log::debug!(
                    target: "btmf::gibbs",
                    "iter={iter} collected={} rmse_obs={:.6}",
                    acc.count() + 1,
                    observed_rmse(values, mask, &estimate)
                );
            }
            acc.push(&estimate);
        }
    }

    let ar = ar.expect("chain ran at least one iteration");
    let state = FactorState::new(spatial, temporal, tau)?;
    Ok((state, ar, acc.finish(PredictionKind::Imputation)))
}
