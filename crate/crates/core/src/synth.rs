//! Planted low-rank AR dataset generation for benchmarks and the
//! acceptance suite.
//!
//! Temporal factors follow a stable vector autoregression whose companion
//! spectral radius is rescaled to a target, so the signal is smooth enough
//! to forecast; spatial factors are dense Gaussian. Observation noise is
//! specified as a fraction of the clean signal RMS.

use chrono::{DateTime, FixedOffset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{validate_lags, ARModel, FactorState, ObservationSet};
use crate::rng::RandomSource;

/// Configuration of a planted dataset.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_strain: usize,
    pub n_temp: usize,
    pub columns: usize,
    pub rank: usize,
    pub lags: Vec<usize>,
    /// Target spectral radius of the AR companion matrix (0, 1).
    pub spectral_radius: f64,
    /// Innovation standard deviation of the factor process.
    pub innovation_std: f64,
    /// Observation noise standard deviation as a fraction of signal RMS.
    pub noise_frac: f64,
    pub seed: u64,
    pub sample_interval_secs: u64,
    pub start_timestamp: DateTime<FixedOffset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_strain: 10,
            n_temp: 10,
            columns: 2000,
            rank: 4,
            lags: vec![1, 2],
            spectral_radius: 0.9995,
            innovation_std: 0.05,
            noise_frac: 0.01,
            seed: 20150601,
            sample_interval_secs: 600,
            start_timestamp: DateTime::parse_from_rfc3339("2015-06-01T00:00:00+00:00")
                .expect("valid timestamp"),
        }
    }
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedData {
    /// Fully observed noisy observations.
    pub observations: ObservationSet,
    /// Noise-free signal `Uᵀ X`.
    pub clean: DMatrix<f64>,
    /// True factors.
    pub factors: FactorState,
    /// True AR model.
    pub ar: ARModel,
}

/// Spectral radius of the companion matrix of the scaled coefficient
/// blocks.
fn companion_radius(blocks: &[DMatrix<f64>], lags: &[usize], k: usize) -> f64 {
    let max_lag = *lags.last().expect("non-empty lags");
    let n = k * max_lag;
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, &lag) in lags.iter().enumerate() {
        companion
            .view_mut((0, (lag - 1) * k), (k, k))
            .copy_from(&blocks[j]);
    }
    for r in k..n {
        companion[(r, r - k)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

/// Build stable AR coefficient blocks with the requested companion radius.
fn build_ar_blocks(
    k: usize,
    lags: &[usize],
    target_radius: f64,
    rng: &mut RandomSource,
) -> Vec<DMatrix<f64>> {
    let d = lags.len();
    // diagonal-dominant base with a strongly dominant first lag so the
    // companion spectrum has one real root near the target and only small
    // oscillatory remainders; keeps the factor process smooth and
    // one-step-predictable
    let mut weights: Vec<f64> = (0..d).map(|j| 0.12f64.powi(j as i32)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let base: Vec<DMatrix<f64>> = weights
        .iter()
        .map(|&w| {
            DMatrix::from_fn(k, k, |i, j| {
                let jitter: f64 = rng.sample(StandardNormal);
                if i == j {
                    w + 0.005 * jitter
                } else {
                    0.01 * jitter
                }
            })
        })
        .collect();

    let radius_at = |gamma: f64| {
        let scaled: Vec<DMatrix<f64>> = base.iter().map(|b| b * gamma).collect();
        companion_radius(&scaled, lags, k)
    };
    let mut hi = 1.0;
    while radius_at(hi) < target_radius && hi < 32.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if radius_at(mid) < target_radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    base.iter().map(|b| b * gamma).collect()
}

/// Generate a planted dataset.
pub fn generate_planted(cfg: &SynthConfig) -> Result<PlantedData> {
    validate_lags(&cfg.lags)?;
    let m = cfg.n_strain + cfg.n_temp;
    let k = cfg.rank;
    let max_lag = *cfg.lags.last().expect("non-empty lags");
    if m == 0 || k == 0 {
        return Err(Error::Config("need at least one channel and rank 1".into()));
    }
    if cfg.columns <= max_lag {
        return Err(Error::InsufficientHistory {
            needed: max_lag,
            actual: cfg.columns,
        });
    }
    if !(cfg.spectral_radius > 0.0 && cfg.spectral_radius < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "spectral radius must lie in (0, 1), got {}",
            cfg.spectral_radius
        )));
    }
    if cfg.innovation_std <= 0.0 || cfg.innovation_std.is_nan() || cfg.noise_frac < 0.0 {
        return Err(Error::InvalidParameter(
            "innovation std must be positive and noise fraction non-negative".into(),
        ));
    }

    let mut rng = RandomSource::with_stream(cfg.seed, 0);
    let blocks = build_ar_blocks(k, &cfg.lags, cfg.spectral_radius, &mut rng);
    let mut coeffs = DMatrix::zeros(k * cfg.lags.len(), k);
    for (j, b) in blocks.iter().enumerate() {
        // stacked A holds A_jᵀ blocks so that Aᵀ z = sum A_j x_{t-l_j}
        coeffs
            .view_mut((j * k, 0), (k, k))
            .copy_from(&b.transpose());
    }
    let innovation_cov = DMatrix::identity(k, k) * cfg.innovation_std * cfg.innovation_std;
    let ar = ARModel::new(cfg.lags.clone(), coeffs, innovation_cov)?;

    // simulate with a warm-up prefix so the kept factors are stationary
    let warmup = 10 * max_lag + 200;
    let total = warmup + cfg.columns;
    let mut x_full = DMatrix::<f64>::zeros(k, total);
    for t in 0..max_lag {
        for i in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            x_full[(i, t)] = cfg.innovation_std * z;
        }
    }
    for t in max_lag..total {
        let mut col = DVector::zeros(k);
        for (j, &lag) in cfg.lags.iter().enumerate() {
            col.gemv(1.0, &blocks[j], &x_full.column(t - lag), 1.0);
        }
        for i in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            col[i] += cfg.innovation_std * z;
        }
        x_full.set_column(t, &col);
    }
    let temporal = x_full.columns(warmup, cfg.columns).into_owned();

    // strain channels load on every factor; temperature channels only on a
    // shared leading subset, so part of the strain signal has no
    // temperature anchor (the two groups correlate without being redundant)
    let shared = k.div_ceil(2);
    let mut spatial = DMatrix::<f64>::zeros(k, m);
    for j in 0..m {
        let active = if j < cfg.n_strain { k } else { shared };
        for i in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            if i < active {
                spatial[(i, j)] = z;
            }
        }
    }

    let clean = spatial.tr_mul(&temporal);
    let rms = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
    let noise_std = cfg.noise_frac * rms;
    let mut values = clean.clone();
    if noise_std > 0.0 {
        for c in 0..cfg.columns {
            for i in 0..m {
                let z: f64 = rng.sample(StandardNormal);
                values[(i, c)] += noise_std * z;
            }
        }
    }

    let mut ids = Vec::with_capacity(m);
    let mut groups = Vec::with_capacity(m);
    for i in 0..cfg.n_strain {
        ids.push(format!("S-{:02}", i + 1));
        groups.push("strain".to_string());
    }
    for i in 0..cfg.n_temp {
        ids.push(format!("T-{:02}", i + 1));
        groups.push("temperature".to_string());
    }

    let observations = ObservationSet::fully_observed(
        values,
        ids,
        groups,
        cfg.sample_interval_secs,
        cfg.start_timestamp,
    )?;
    let tau = if noise_std > 0.0 {
        1.0 / (noise_std * noise_std)
    } else {
        1e12
    };
    let factors = FactorState::new(spatial, temporal, tau)?;

    Ok(PlantedData {
        observations,
        clean,
        factors,
        ar,
    })
}
