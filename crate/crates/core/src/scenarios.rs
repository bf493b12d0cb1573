//! Missing-mask generation for the random, structured, and mixed scenarios,
//! plus the normalized accuracy metric.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ObservationSet;
use crate::rng::RandomSource;

/// The three missing-data scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingScenario {
    /// Independent cell-level dropout.
    Random,
    /// Contiguous whole-block dropout per channel.
    Structured,
    /// Structured blocks first, then random dropout of what remains.
    Mixed,
}

/// Specification of a synthetic missing pattern.
///
/// Rates count target cells only: rows whose group matches `target_group`
/// (every row when `None`). Non-target rows are never masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingSpec {
    pub scenario: MissingScenario,
    /// Fraction of target cells dropped at random.
    pub eta_random: f64,
    /// Fraction of each target row dropped in contiguous blocks.
    pub eta_structured: f64,
    /// Columns per structured block (e.g. one day of samples).
    pub block_length: usize,
    /// Channel group the mask applies to; `None` targets every row.
    pub target_group: Option<String>,
    /// Drop the same blocks in every target row instead of per-row draws.
    pub same_blocks_all_rows: bool,
    pub seed: u64,
}

impl MissingSpec {
    pub fn new(scenario: MissingScenario, eta_random: f64, eta_structured: f64) -> Self {
        Self {
            scenario,
            eta_random,
            eta_structured,
            block_length: 144,
            target_group: None,
            same_blocks_all_rows: false,
            seed: 0,
        }
    }

    fn effective_rates(&self) -> (f64, f64) {
        match self.scenario {
            MissingScenario::Random => (self.eta_random, 0.0),
            MissingScenario::Structured => (0.0, self.eta_structured),
            MissingScenario::Mixed => (self.eta_random, self.eta_structured),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (er, es) = self.effective_rates();
        if !(0.0..=1.0).contains(&er) || !(0.0..=1.0).contains(&es) {
            return Err(Error::InvalidParameter(format!(
                "missing fractions must lie in [0, 1], got random={er}, structured={es}"
            )));
        }
        if er + es > 1.0 {
            return Err(Error::InfeasibleSpec(format!(
                "combined missing rate {} exceeds 1",
                er + es
            )));
        }
        if self.block_length < 1 {
            return Err(Error::InvalidParameter(
                "block length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Uniformly choose `n_blocks` non-overlapping block start columns for
/// blocks of `block_len` inside `t` columns. Blocks never straddle the
/// matrix boundary.
fn sample_block_starts(
    t: usize,
    block_len: usize,
    n_blocks: usize,
    rng: &mut RandomSource,
) -> Vec<usize> {
    // bijection with size-n subsets of {0, ..., t - n*len + n - 1}
    let slots = t - n_blocks * block_len + n_blocks;
    let mut idx: Vec<usize> = (0..slots).collect();
    for i in 0..n_blocks {
        let j = rng.random_range(i..slots);
        idx.swap(i, j);
    }
    let mut chosen = idx[..n_blocks].to_vec();
    chosen.sort_unstable();
    chosen
        .iter()
        .enumerate()
        .map(|(j, &s)| s + j * (block_len - 1))
        .collect()
}

/// Generate an M x T observation mask (1 = observed) from a missing spec.
///
/// Deterministic in the spec's seed and independent of any data values.
/// Random dropout removes exactly `round(eta_random * |target cells|)`
/// cells; structured dropout removes `round(eta_structured * T /
/// block_length)` whole blocks per target row.
pub fn generate_mask(spec: &MissingSpec, groups: &[String], t: usize) -> Result<DMatrix<u8>> {
    spec.validate()?;
    let m = groups.len();
    if m == 0 || t == 0 {
        return Err(Error::ShapeMismatch(
            "mask needs at least one row and column".into(),
        ));
    }
    let target_rows: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| spec.target_group.as_ref().is_none_or(|tg| *g == tg))
        .map(|(i, _)| i)
        .collect();
    if target_rows.is_empty() {
        return Err(Error::InfeasibleSpec(format!(
            "no rows match target group {:?}",
            spec.target_group
        )));
    }

    let (eta_random, eta_structured) = spec.effective_rates();
    let mut mask = DMatrix::from_element(m, t, 1u8);
    let mut rng = RandomSource::with_stream(spec.seed, 0);

    if eta_structured > 0.0 {
        let len = spec.block_length;
        if len > t {
            return Err(Error::InfeasibleSpec(format!(
                "block length {len} exceeds the {t} available columns"
            )));
        }
        let n_blocks = (eta_structured * t as f64 / len as f64).round() as usize;
        if n_blocks * len > t {
            return Err(Error::InfeasibleSpec(format!(
                "{n_blocks} disjoint blocks of {len} columns do not fit in {t}"
            )));
        }
        if n_blocks > 0 {
            if spec.same_blocks_all_rows {
                let starts = sample_block_starts(t, len, n_blocks, &mut rng);
                for &row in &target_rows {
                    for &s in &starts {
                        for c in s..s + len {
                            mask[(row, c)] = 0;
                        }
                    }
                }
            } else {
                for &row in &target_rows {
                    for s in sample_block_starts(t, len, n_blocks, &mut rng) {
                        for c in s..s + len {
                            mask[(row, c)] = 0;
                        }
                    }
                }
            }
        }
    }

    if eta_random > 0.0 {
        let total_target = target_rows.len() * t;
        let n_drop = (eta_random * total_target as f64).round() as usize;
        let mut remaining: Vec<(usize, usize)> = Vec::with_capacity(total_target);
        for &row in &target_rows {
            for c in 0..t {
                if mask[(row, c)] == 1 {
                    remaining.push((row, c));
                }
            }
        }
        if n_drop > remaining.len() {
            return Err(Error::InfeasibleSpec(format!(
                "random dropout of {n_drop} cells exceeds the {} still observed",
                remaining.len()
            )));
        }
        let len = remaining.len();
        for i in 0..n_drop {
            let j = rng.random_range(i..len);
            remaining.swap(i, j);
            let (row, c) = remaining[i];
            mask[(row, c)] = 0;
        }
    }

    Ok(mask)
}

/// Apply an extra mask on top of an observation set: newly hidden cells get
/// the NaN sentinel and a zero mask bit.
pub fn apply_mask(obs: &ObservationSet, extra: &DMatrix<u8>) -> Result<ObservationSet> {
    let (m, t) = (obs.n_channels(), obs.n_columns());
    if extra.nrows() != m || extra.ncols() != t {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{} for a {m}x{t} observation set",
            extra.nrows(),
            extra.ncols()
        )));
    }
    let mut values = obs.values().clone();
    let mut mask = obs.mask().clone();
    for c in 0..t {
        for i in 0..m {
            if extra[(i, c)] == 0 {
                mask[(i, c)] = 0;
            }
            if mask[(i, c)] == 0 {
                values[(i, c)] = f64::NAN;
            }
        }
    }
    ObservationSet::new(
        values,
        mask,
        obs.channel_ids().to_vec(),
        obs.channel_groups().to_vec(),
        obs.sample_interval_secs(),
        obs.start_timestamp(),
    )
}

/// Root mean square of a slice.
pub fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Root mean square error between paired slices.
pub fn rmse(truth: &[f64], estimate: &[f64]) -> f64 {
    let n = truth.len();
    (truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64)
        .sqrt()
}

/// Normalized accuracy in percent: `(1 - RMSE/RMS) * 100`.
///
/// Can go negative when the estimate is worse than predicting zero; callers
/// must report it unclipped.
pub fn accuracy(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimate.len() {
        return Err(Error::UndefinedMetric(format!(
            "need matching non-empty value sets, got {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let denom = rms(truth);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("truth values are all zero".into()));
    }
    Ok((1.0 - rmse(truth, estimate) / denom) * 100.0)
}

/// Positions where the mask is zero, in column-major order.
pub fn masked_positions(mask: &DMatrix<u8>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in 0..mask.ncols() {
        for i in 0..mask.nrows() {
            if mask[(i, c)] == 0 {
                out.push((i, c));
            }
        }
    }
    out
}

/// Accuracy of `estimate` against `truth` at the given positions.
pub fn accuracy_at(
    truth: &DMatrix<f64>,
    estimate: &DMatrix<f64>,
    positions: &[(usize, usize)],
) -> Result<f64> {
    let t: Vec<f64> = positions.iter().map(|&(i, c)| truth[(i, c)]).collect();
    let e: Vec<f64> = positions.iter().map(|&(i, c)| estimate[(i, c)]).collect();
    accuracy(&t, &e)
}
