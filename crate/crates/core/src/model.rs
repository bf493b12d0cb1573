//! Core value types: the observed data matrix, the latent factorization, the
//! AR model over temporal factors, prior configuration, and prediction
//! output.
//!
//! Columns are 0-indexed throughout. The AR mean at column `t` uses columns
//! `t - l` for each lag `l`, so it is defined once `t >= max_lag`.

use chrono::{DateTime, Duration, FixedOffset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Scale of the random factor initialization used when a chain is not
/// warm-started.
pub const INIT_SCALE: f64 = 0.1;

/// A multivariate sensor series: M channels by T time stamps with an
/// observation mask.
///
/// `values` at unobserved positions carry a NaN sentinel (or whatever the
/// producer left there) and are never read by inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    values: DMatrix<f64>,
    mask: DMatrix<u8>,
    channel_ids: Vec<String>,
    channel_groups: Vec<String>,
    sample_interval_secs: u64,
    start_timestamp: DateTime<FixedOffset>,
}

impl ObservationSet {
    pub fn new(
        values: DMatrix<f64>,
        mask: DMatrix<u8>,
        channel_ids: Vec<String>,
        channel_groups: Vec<String>,
        sample_interval_secs: u64,
        start_timestamp: DateTime<FixedOffset>,
    ) -> Result<Self> {
        let (m, t) = (values.nrows(), values.ncols());
        if m == 0 || t == 0 {
            return Err(Error::ShapeMismatch(format!(
                "observation matrix must be at least 1x1, got {m}x{t}"
            )));
        }
        if mask.nrows() != m || mask.ncols() != t {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{} but values are {m}x{t}",
                mask.nrows(),
                mask.ncols()
            )));
        }
        if channel_ids.len() != m || channel_groups.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "need {m} channel ids and groups, got {} and {}",
                channel_ids.len(),
                channel_groups.len()
            )));
        }
        {
            let mut seen = std::collections::HashSet::new();
            for id in &channel_ids {
                if !seen.insert(id) {
                    return Err(Error::Config(format!("duplicate channel id {id:?}")));
                }
            }
        }
        if sample_interval_secs == 0 {
            return Err(Error::Config("sample interval must be positive".into()));
        }
        for i in 0..m {
            for t_idx in 0..t {
                match mask[(i, t_idx)] {
                    0 => {}
                    1 => {
                        if !values[(i, t_idx)].is_finite() {
                            return Err(Error::Config(format!(
                                "non-finite value at observed position ({i}, {t_idx})"
                            )));
                        }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "mask entry {other} at ({i}, {t_idx}) is not 0 or 1"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            values,
            mask,
            channel_ids,
            channel_groups,
            sample_interval_secs,
            start_timestamp,
        })
    }

    /// Fully observed set with a trivial mask.
    pub fn fully_observed(
        values: DMatrix<f64>,
        channel_ids: Vec<String>,
        channel_groups: Vec<String>,
        sample_interval_secs: u64,
        start_timestamp: DateTime<FixedOffset>,
    ) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), 1u8);
        Self::new(
            values,
            mask,
            channel_ids,
            channel_groups,
            sample_interval_secs,
            start_timestamp,
        )
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<u8> {
        &self.mask
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn channel_groups(&self) -> &[String] {
        &self.channel_groups
    }

    pub fn sample_interval_secs(&self) -> u64 {
        self.sample_interval_secs
    }

    pub fn start_timestamp(&self) -> DateTime<FixedOffset> {
        self.start_timestamp
    }

    pub fn is_observed(&self, channel: usize, t: usize) -> bool {
        self.mask[(channel, t)] == 1
    }

    pub fn value(&self, channel: usize, t: usize) -> f64 {
        self.values[(channel, t)]
    }

    /// Number of observed entries |Ω|.
    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Observed `(t, y)` pairs of one channel row.
    pub fn observed_in_row(&self, channel: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_columns())
            .filter(move |&t| self.mask[(channel, t)] == 1)
            .map(move |t| (t, self.values[(channel, t)]))
    }

    /// Observed `(channel, y)` pairs of one time column.
    pub fn observed_in_col(&self, t: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_channels())
            .filter(move |&i| self.mask[(i, t)] == 1)
            .map(move |i| (i, self.values[(i, t)]))
    }

    /// Timestamp of column `t`.
    pub fn timestamp_at(&self, t: usize) -> DateTime<FixedOffset> {
        self.start_timestamp + Duration::seconds(self.sample_interval_secs as i64 * t as i64)
    }

    /// Copy of the column range `[start, end)` with a shifted start
    /// timestamp.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_columns() {
            return Err(Error::OutOfRange {
                index: end,
                reason: format!(
                    "window [{start}, {end}) outside data with {} columns",
                    self.n_columns()
                ),
            });
        }
        Ok(Self {
            values: self.values.columns(start, end - start).into_owned(),
            mask: self.mask.columns(start, end - start).into_owned(),
            channel_ids: self.channel_ids.clone(),
            channel_groups: self.channel_groups.clone(),
            sample_interval_secs: self.sample_interval_secs,
            start_timestamp: self.timestamp_at(start),
        })
    }

    /// Heap bytes held by the values and mask storage.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>() + self.mask.len()
    }
}

/// Latent factorization state: spatial factors (K x M, one column per
/// channel), temporal factors (K x T, one column per time stamp) and the
/// observation noise precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub spatial: DMatrix<f64>,
    pub temporal: DMatrix<f64>,
    pub noise_precision: f64,
}

impl FactorState {
    pub fn new(
        spatial: DMatrix<f64>,
        temporal: DMatrix<f64>,
        noise_precision: f64,
    ) -> Result<Self> {
        if spatial.nrows() != temporal.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "spatial factors have rank {} but temporal factors rank {}",
                spatial.nrows(),
                temporal.nrows()
            )));
        }
        if noise_precision <= 0.0 || noise_precision.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be positive, got {noise_precision}"
            )));
        }
        Ok(Self {
            spatial,
            temporal,
            noise_precision,
        })
    }

    /// Random initialization: factor columns i.i.d. N(0, I) scaled by
    /// [`INIT_SCALE`], noise precision 1. Spatial factors are drawn first,
    /// then temporal, both in column-major order.
    pub fn random_init(
        rank: usize,
        n_channels: usize,
        n_columns: usize,
        rng: &mut RandomSource,
    ) -> Self {
        let spatial = random_factor_matrix(rank, n_channels, rng);
        let temporal = random_factor_matrix(rank, n_columns, rng);
        Self {
            spatial,
            temporal,
            noise_precision: 1.0,
        }
    }

    pub fn rank(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn n_columns(&self) -> usize {
        self.temporal.ncols()
    }
}

/// K x N matrix with i.i.d. N(0, INIT_SCALE^2) entries in column-major order.
pub fn random_factor_matrix(rank: usize, n: usize, rng: &mut RandomSource) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(rank, n);
    for j in 0..n {
        for i in 0..rank {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = INIT_SCALE * z;
        }
    }
    m
}

/// Vector autoregression over temporal factor columns: a strictly increasing
/// lag set, the stacked coefficient matrix ((K d) x K) and the innovation
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ARModel {
    pub lags: Vec<usize>,
    pub coeffs: DMatrix<f64>,
    pub innovation_cov: DMatrix<f64>,
}

impl ARModel {
    pub fn new(
        lags: Vec<usize>,
        coeffs: DMatrix<f64>,
        innovation_cov: DMatrix<f64>,
    ) -> Result<Self> {
        validate_lags(&lags)?;
        let k = innovation_cov.nrows();
        if innovation_cov.ncols() != k {
            return Err(Error::ShapeMismatch(
                "innovation covariance must be square".into(),
            ));
        }
        if coeffs.nrows() != k * lags.len() || coeffs.ncols() != k {
            return Err(Error::ShapeMismatch(format!(
                "AR coefficients must be {}x{k}, got {}x{}",
                k * lags.len(),
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        Ok(Self {
            lags,
            coeffs,
            innovation_cov,
        })
    }

    /// AR order d.
    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("lags are non-empty")
    }

    pub fn rank(&self) -> usize {
        self.innovation_cov.nrows()
    }

    /// The j-th K x K coefficient block.
    pub fn block(&self, j: usize) -> nalgebra::DMatrixView<'_, f64> {
        let k = self.rank();
        self.coeffs.view((j * k, 0), (k, k))
    }
}

pub fn validate_lags(lags: &[usize]) -> Result<()> {
    if lags.is_empty() {
        return Err(Error::Config("lag set must be non-empty".into()));
    }
    if lags[0] == 0 {
        return Err(Error::Config("lags must be positive".into()));
    }
    if lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "lags must be strictly increasing, got {lags:?}"
        )));
    }
    Ok(())
}

/// Stack the lagged factor columns `x_{t-l_1}, ..., x_{t-l_d}` into one
/// length K*d vector.
pub fn lag_stack(temporal: &DMatrix<f64>, lags: &[usize], t: usize) -> Result<DVector<f64>> {
    let max_lag = *lags
        .last()
        .ok_or_else(|| Error::Config("empty lag set".into()))?;
    if t < max_lag {
        return Err(Error::OutOfRange {
            index: t,
            reason: format!("lag stack needs column index >= max lag {max_lag}"),
        });
    }
    if t > temporal.ncols() {
        return Err(Error::OutOfRange {
            index: t,
            reason: format!("only {} factor columns available", temporal.ncols()),
        });
    }
    let k = temporal.nrows();
    let mut z = DVector::zeros(k * lags.len());
    for (j, &lag) in lags.iter().enumerate() {
        z.rows_mut(j * k, k).copy_from(&temporal.column(t - lag));
    }
    Ok(z)
}

/// AR mean `Aᵀ z_t` for column `t`; errors when lagged columns are missing
/// so callers fall back to the N(0, I) prior branch.
pub fn ar_mean(ar: &ARModel, temporal: &DMatrix<f64>, t: usize) -> Result<DVector<f64>> {
    if t > temporal.ncols() {
        return Err(Error::OutOfRange {
            index: t,
            reason: format!("only {} factor columns available", temporal.ncols()),
        });
    }
    let z = lag_stack(temporal, &ar.lags, t)?;
    Ok(ar.coeffs.tr_mul(&z))
}

/// Deterministic reconstruction `Uᵀ X`.
pub fn reconstruct(factors: &FactorState) -> DMatrix<f64> {
    factors.spatial.tr_mul(&factors.temporal)
}

/// Fixed hyper-hyper-parameters of the hierarchical model.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Prior mean of the spatial hyper-mean (length K).
    pub mu0: DVector<f64>,
    /// Precision multiplier on the spatial hyper-mean.
    pub beta0: f64,
    /// Wishart scale for the spatial precision (K x K SPD).
    pub w0: DMatrix<f64>,
    /// Degrees of freedom shared by the Wishart and inverse-Wishart priors.
    pub v0: f64,
    /// Matrix-normal prior mean of the AR coefficients ((K d) x K).
    pub lambda0: DMatrix<f64>,
    /// Matrix-normal row covariance ((K d) x (K d) SPD).
    pub row_cov0: DMatrix<f64>,
    /// Inverse-Wishart scale for the innovation covariance (K x K SPD).
    pub psi0: DMatrix<f64>,
    /// Gamma shape for the noise precision.
    pub a0: f64,
    /// Gamma rate for the noise precision.
    pub b0: f64,
}

impl PriorConfig {
    /// Reference defaults: beta0 = 1, v0 = K, a0 = b0 = 1e-6, zero means,
    /// identity covariance-role matrices.
    pub fn default_for(rank: usize, order: usize) -> Self {
        Self {
            mu0: DVector::zeros(rank),
            beta0: 1.0,
            w0: DMatrix::identity(rank, rank),
            v0: rank as f64,
            lambda0: DMatrix::zeros(rank * order, rank),
            row_cov0: DMatrix::identity(rank * order, rank * order),
            psi0: DMatrix::identity(rank, rank),
            a0: 1e-6,
            b0: 1e-6,
        }
    }

    pub fn validate(&self, rank: usize, order: usize) -> Result<()> {
        let kd = rank * order;
        if self.mu0.len() != rank
            || self.w0.nrows() != rank
            || self.w0.ncols() != rank
            || self.psi0.nrows() != rank
            || self.psi0.ncols() != rank
            || self.lambda0.nrows() != kd
            || self.lambda0.ncols() != rank
            || self.row_cov0.nrows() != kd
            || self.row_cov0.ncols() != kd
        {
            return Err(Error::ShapeMismatch(format!(
                "prior dimensions inconsistent with rank {rank} and order {order}"
            )));
        }
        if self.v0 <= rank as f64 - 1.0 {
            return Err(Error::InvalidDof {
                dof: self.v0,
                dim: rank,
            });
        }
        if [self.beta0, self.a0, self.b0]
            .iter()
            .any(|v| *v <= 0.0 || v.is_nan())
        {
            return Err(Error::InvalidParameter(
                "beta0, a0 and b0 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian hyper-state over spatial factors: mean and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialHyperState {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

/// What a prediction matrix contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionKind {
    Imputation,
    Forecast,
}

/// Per-entry posterior mean and standard deviation plus chain metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
    pub n_samples: usize,
    pub kind: PredictionKind,
}

/// Single-pass accumulator for the per-entry mean and second moment of the
/// collected chain samples.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    mean: DMatrix<f64>,
    m2: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            count: 0,
            mean: DMatrix::zeros(nrows, ncols),
            m2: DMatrix::zeros(nrows, ncols),
        }
    }

    /// Welford update with a full sample matrix.
    pub fn push(&mut self, sample: &DMatrix<f64>) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (idx, &v) in sample.iter().enumerate() {
            let delta = v - self.mean[idx];
            self.mean[idx] += delta * inv;
            self.m2[idx] += delta * (v - self.mean[idx]);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Finish into a prediction result; std is the population standard
    /// deviation over collected samples (exactly zero for one sample).
    pub fn finish(self, kind: PredictionKind) -> PredictionResult {
        assert!(self.count >= 1, "no samples collected");
        let n = self.count as f64;
        let std = self.m2.map(|m2| (m2 / n).max(0.0).sqrt());
        PredictionResult {
            mean: self.mean,
            std,
            n_samples: self.count,
            kind,
        }
    }
}
