//! Two-stage incremental windowing: growing dynamic windows up to a
//! critical length, then fixed-length sliding windows, with warm-started
//! factors and coverage-counted imputation averaging.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forecast::{ForecastOptions, RollingForecaster};
use crate::gibbs::{observed_rmse, run_imputation_chain, ChainConfig};
use crate::model::{
    random_factor_matrix, FactorState, ObservationSet, PredictionKind, PredictionResult,
    PriorConfig,
};
use crate::rng::{RandomSource, RngBundle};

/// Which stage a window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowStage {
    /// Growing window anchored at column 0.
    Dynamic,
    /// Constant-length sliding window.
    Fixed,
}

/// One training window over a column range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub stage: WindowStage,
}

/// The full window schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub windows: Vec<Window>,
    pub increment: usize,
    pub critical_len: usize,
}

impl WindowPlan {
    pub fn validate_against(&self, t_total: usize) -> Result<()> {
        match self.windows.last() {
            Some(w) if w.end == t_total => Ok(()),
            Some(w) => Err(Error::Config(format!(
                "plan ends at column {} but data has {t_total} columns",
                w.end
            ))),
            None => Err(Error::Config("empty window plan".into())),
        }
    }
}

/// Build the two-stage schedule: windows `[0, w*I)` while `w <= T1/I`, then
/// sliding windows `[(w - T1/I)*I, w*I)`. A trailing remainder becomes a
/// shortened final window.
pub fn plan_windows(t_total: usize, increment: usize, critical_len: usize) -> Result<WindowPlan> {
    if increment < 1 {
        return Err(Error::Config("window increment must be at least 1".into()));
    }
    if t_total < increment {
        return Err(Error::Config(format!(
            "data has {t_total} columns, below one increment of {increment}"
        )));
    }
    if critical_len == 0 || !critical_len.is_multiple_of(increment) {
        return Err(Error::Config(format!(
            "critical length {critical_len} must be a positive multiple of the increment {increment}"
        )));
    }
    let n_stable = critical_len / increment;
    let n_full = t_total / increment;
    let mut windows = Vec::with_capacity(n_full + 1);
    let mut push = |w: usize, end: usize| {
        let (start, stage) = if w <= n_stable {
            (0, WindowStage::Dynamic)
        } else {
            ((w - n_stable) * increment, WindowStage::Fixed)
        };
        windows.push(Window { start, end, stage });
    };
    for w in 1..=n_full {
        push(w, w * increment);
    }
    if !t_total.is_multiple_of(increment) {
        push(n_full + 1, t_total);
    }
    Ok(WindowPlan {
        windows,
        increment,
        critical_len,
    })
}

/// Merges per-window imputation means with equal weight wherever windows
/// overlap, tracking per-entry coverage counts.
#[derive(Debug, Clone)]
pub struct ImputationAccumulator {
    sum: DMatrix<f64>,
    var_sum: DMatrix<f64>,
    std_sum: DMatrix<f64>,
    count: DMatrix<u32>,
}

impl ImputationAccumulator {
    pub fn new(n_channels: usize, t_total: usize) -> Self {
        Self {
            sum: DMatrix::zeros(n_channels, t_total),
            var_sum: DMatrix::zeros(n_channels, t_total),
            std_sum: DMatrix::zeros(n_channels, t_total),
            count: DMatrix::zeros(n_channels, t_total),
        }
    }

    /// Fold in one window's prediction starting at global column `start`.
    pub fn add(&mut self, pred: &PredictionResult, start: usize) {
        for c in 0..pred.mean.ncols() {
            let g = start + c;
            for i in 0..pred.mean.nrows() {
                self.sum[(i, g)] += pred.mean[(i, c)];
                let s = pred.std[(i, c)];
                self.var_sum[(i, g)] += s * s;
                self.std_sum[(i, g)] += s;
                self.count[(i, g)] += 1;
            }
        }
    }

    /// Per-entry coverage counts.
    pub fn counts(&self) -> &DMatrix<u32> {
        &self.count
    }

    /// Entrywise average: mean = sum/count. Standard deviations average in
    /// variance across overlapping windows; a singly-covered entry passes
    /// its window std through unchanged.
    pub fn finish(self, n_samples: usize, kind: PredictionKind) -> Result<PredictionResult> {
        let (m, t) = (self.sum.nrows(), self.sum.ncols());
        let mut mean = DMatrix::zeros(m, t);
        let mut std = DMatrix::zeros(m, t);
        for idx in 0..m * t {
            let c = self.count[idx];
            if c == 0 {
                return Err(Error::Config(format!(
                    "window plan leaves entry {idx} uncovered"
                )));
            }
            mean[idx] = self.sum[idx] / c as f64;
            std[idx] = if c == 1 {
                self.std_sum[idx]
            } else {
                (self.var_sum[idx] / c as f64).sqrt()
            };
        }
        Ok(PredictionResult {
            mean,
            std,
            n_samples,
            kind,
        })
    }
}

/// Per-window execution record.
#[derive(Debug, Clone)]
pub struct WindowRunStat {
    /// 1-based window index.
    pub index: usize,
    pub stage: WindowStage,
    pub start: usize,
    pub end: usize,
    pub wall: Duration,
    /// RMSE of the window's imputation mean on observed entries.
    pub observed_rmse: f64,
}

/// Output of the incremental pipeline.
#[derive(Debug, Clone)]
pub struct IncrementalResult {
    /// Merged imputation over all columns.
    pub imputation: PredictionResult,
    /// Concatenated per-window forecasts, absent when there is nothing to
    /// forecast (single full-coverage window and zero trailing horizon).
    pub forecast: Option<PredictionResult>,
    /// Global column index of the first forecast column.
    pub forecast_offset: usize,
    /// Per-entry window coverage counts.
    pub coverage: DMatrix<u32>,
    pub window_stats: Vec<WindowRunStat>,
}

/// Warm-start the temporal factors of a window from the previous window's
/// factors: overlapping columns are copied, the fresh tail is randomly
/// initialized.
fn warm_start_temporal(
    prev: &DMatrix<f64>,
    prev_start: usize,
    prev_end: usize,
    win: &Window,
    rng: &mut RandomSource,
) -> DMatrix<f64> {
    let k = prev.nrows();
    let len = win.end - win.start;
    let mut x = DMatrix::zeros(k, len);
    let overlap_end = prev_end.min(win.end);
    let mut fresh_from = 0usize;
    if win.start < overlap_end {
        let n = overlap_end - win.start;
        x.columns_mut(0, n)
            .copy_from(&prev.columns(win.start - prev_start, n));
        fresh_from = n;
    }
    if fresh_from < len {
        let tail = random_factor_matrix(k, len - fresh_from, rng);
        x.columns_mut(fresh_from, len - fresh_from).copy_from(&tail);
    }
    x
}

/// Run the full incremental pipeline: per-window imputation chains with
/// warm starts, per-window rolling forecasts of the following columns, and
/// a trailing extrapolation of `horizon` columns past the data end.
#[allow(clippy::too_many_arguments)]
pub fn run_incremental(
    obs: &ObservationSet,
    plan: &WindowPlan,
    rank: usize,
    lags: &[usize],
    prior: &PriorConfig,
    chain: &ChainConfig,
    horizon: usize,
    opts: &ForecastOptions,
    rngs: &mut RngBundle,
) -> Result<IncrementalResult> {
    chain.validate()?;
    crate::model::validate_lags(lags)?;
    let t_total = obs.n_columns();
    plan.validate_against(t_total)?;
    let max_lag = *lags.last().expect("non-empty lags");
    if plan.increment <= max_lag {
        return Err(Error::Config(format!(
            "window increment {} must exceed the largest lag {max_lag}",
            plan.increment
        )));
    }
    let m = obs.n_channels();

    let fc_offset = plan.windows[0].end;
    let fc_width = t_total - fc_offset + horizon;
    let mut fc_mean = DMatrix::zeros(m, fc_width);
    let mut fc_std = DMatrix::zeros(m, fc_width);

    let mut acc = ImputationAccumulator::new(m, t_total);
    let mut stats = Vec::with_capacity(plan.windows.len());
    let mut prev_u: Option<DMatrix<f64>> = None;
    let mut prev_x: Option<(DMatrix<f64>, usize, usize)> = None;
    let mut prev_tau = 1.0;

    for (idx, win) in plan.windows.iter().enumerate() {
        let t0 = Instant::now();
        let len = win.end - win.start;
        let wobs = obs.window(win.start, win.end)?;

        let init = match (&prev_u, win.stage) {
            (None, _) => FactorState::random_init(rank, m, len, &mut rngs.master),
            (Some(u), WindowStage::Dynamic) => FactorState::new(
                u.clone(),
                random_factor_matrix(rank, len, &mut rngs.master),
                prev_tau,
            )?,
            (Some(u), WindowStage::Fixed) => {
                let (x_prev, s_prev, e_prev) = prev_x.as_ref().expect("fixed follows a window");
                let x = warm_start_temporal(x_prev, *s_prev, *e_prev, win, &mut rngs.master);
                FactorState::new(u.clone(), x, prev_tau)?
            }
        };

        let (state, ar, pred) = run_imputation_chain(&wobs, init, lags, prior, chain, rngs)
            .map_err(|e| e.at_window(idx + 1))?;
        let rmse = observed_rmse(wobs.values(), wobs.mask(), &pred.mean);
        acc.add(&pred, win.start);

        let fc_h = if idx + 1 < plan.windows.len() {
            plan.windows[idx + 1].end - win.end
        } else {
            horizon
        };
        let mut u_next = state.spatial.clone();
        if fc_h > 0 {
            let future = if idx + 1 < plan.windows.len() {
                Some(obs.window(win.end, plan.windows[idx + 1].end)?)
            } else {
                None
            };
            let mut forecaster =
                RollingForecaster::new(&state, ar.clone(), &wobs, prior.clone(), opts.clone())
                    .map_err(|e| e.at_window(idx + 1))?;
            let fpred = forecaster
                .run(future.as_ref(), fc_h, chain, rngs)
                .map_err(|e| e.at_window(idx + 1))?;
            let at = win.end - fc_offset;
            fc_mean.columns_mut(at, fc_h).copy_from(&fpred.mean);
            fc_std.columns_mut(at, fc_h).copy_from(&fpred.std);
            u_next = forecaster.spatial().clone();
        }

        let wall = t0.elapsed();
        log::info!(
            target: "btmf::incremental",
            "window={} stage={:?} span=[{},{}) iters={} rmse_obs={rmse:.6} wall_ms={}",
            idx + 1,
            win.stage,
            win.start,
            win.end,
            chain.n_iters_impute,
            wall.as_millis()
        );
        stats.push(WindowRunStat {
            index: idx + 1,
            stage: win.stage,
            start: win.start,
            end: win.end,
            wall,
            observed_rmse: rmse,
        });

        prev_u = Some(u_next);
        prev_x = Some((state.temporal, win.start, win.end));
        prev_tau = state.noise_precision;
    }

    let coverage = acc.counts().clone();
    let imputation = acc.finish(chain.impute_samples(), PredictionKind::Imputation)?;
    let forecast = (fc_width > 0).then_some(PredictionResult {
        mean: fc_mean,
        std: fc_std,
        n_samples: chain.forecast_samples(),
        kind: PredictionKind::Forecast,
    });

    Ok(IncrementalResult {
        imputation,
        forecast,
        forecast_offset: fc_offset,
        coverage,
        window_stats: stats,
    })
}
