//! Result emission: prediction matrices, plot-ready long-format series,
//! optional ±3σ bands, and the metrics report.

use std::path::Path;

use btmf_core::io::{matrix_to_string, write_atomic};
use btmf_core::scenarios::{accuracy, rms, rmse};
use btmf_core::{ObservationSet, PredictionResult};
use chrono::Duration;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Wrap a prediction matrix as a fully observed observation set sharing the
/// template's channel metadata, with the start timestamp shifted by
/// `offset` columns.
fn as_observation_set(
    matrix: &DMatrix<f64>,
    template: &ObservationSet,
    offset: usize,
) -> CliResult<ObservationSet> {
    ObservationSet::fully_observed(
        matrix.clone(),
        template.channel_ids().to_vec(),
        template.channel_groups().to_vec(),
        template.sample_interval_secs(),
        template.start_timestamp()
            + Duration::seconds(template.sample_interval_secs() as i64 * offset as i64),
    )
    .map_err(CliError::from)
}

/// Write the mean and std matrices of a prediction.
pub fn write_prediction_matrices(
    pred: &PredictionResult,
    template: &ObservationSet,
    offset: usize,
    mean_path: &Path,
    std_path: &Path,
) -> CliResult<()> {
    let mean = as_observation_set(&pred.mean, template, offset)?;
    write_atomic(mean_path, &matrix_to_string(&mean))?;
    let std = as_observation_set(&pred.std, template, offset)?;
    write_atomic(std_path, &matrix_to_string(&std))?;
    Ok(())
}

/// Plot-ready long format: one row per (channel, time stamp).
pub fn write_series(
    pred: &PredictionResult,
    template: &ObservationSet,
    offset: usize,
    path: &Path,
) -> CliResult<()> {
    let mut out = String::from("channel_id,group,time_index,timestamp,mean,std\n");
    for i in 0..pred.mean.nrows() {
        for c in 0..pred.mean.ncols() {
            let t = offset + c;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                template.channel_ids()[i],
                template.channel_groups()[i],
                t,
                template.timestamp_at(t).to_rfc3339(),
                pred.mean[(i, c)],
                pred.std[(i, c)],
            ));
        }
    }
    write_atomic(path, &out).map_err(CliError::from)
}

/// Per-entry mean ± 3 std bands.
pub fn write_bands(
    pred: &PredictionResult,
    template: &ObservationSet,
    offset: usize,
    path: &Path,
) -> CliResult<()> {
    let mut out = String::from("channel_id,group,time_index,lo,hi\n");
    for i in 0..pred.mean.nrows() {
        for c in 0..pred.mean.ncols() {
            let (m, s) = (pred.mean[(i, c)], pred.std[(i, c)]);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                template.channel_ids()[i],
                template.channel_groups()[i],
                offset + c,
                m - 3.0 * s,
                m + 3.0 * s,
            ));
        }
    }
    write_atomic(path, &out).map_err(CliError::from)
}

/// Incrementally built metrics report (stable line-based key=value text).
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            lines: vec![format!("command={command}")],
        }
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}={value}"));
    }

    /// Overall and per-channel accuracy of `estimate` against `truth` at
    /// `positions` (matrix coordinates). Positions are also counted so the
    /// numbers can be recomputed externally.
    pub fn accuracy_section(
        &mut self,
        label: &str,
        truth: &DMatrix<f64>,
        estimate: &DMatrix<f64>,
        positions: &[(usize, usize)],
        channel_ids: &[String],
    ) -> CliResult<()> {
        let t: Vec<f64> = positions.iter().map(|&(i, c)| truth[(i, c)]).collect();
        let e: Vec<f64> = positions.iter().map(|&(i, c)| estimate[(i, c)]).collect();
        let rho = accuracy(&t, &e).map_err(CliError::from)?;
        self.lines.push(format!(
            "[{label}] n={} rho={rho:.2} rmse={} rms={}",
            positions.len(),
            rmse(&t, &e),
            rms(&t),
        ));
        for (i, id) in channel_ids.iter().enumerate() {
            let rows: Vec<(usize, usize)> =
                positions.iter().copied().filter(|&(r, _)| r == i).collect();
            if rows.is_empty() {
                self.lines
                    .push(format!("[{label}.channel] id={id} n=0 rho=NA"));
                continue;
            }
            let t: Vec<f64> = rows.iter().map(|&(r, c)| truth[(r, c)]).collect();
            let e: Vec<f64> = rows.iter().map(|&(r, c)| estimate[(r, c)]).collect();
            match accuracy(&t, &e) {
                Ok(rho) => self.lines.push(format!(
                    "[{label}.channel] id={id} n={} rho={rho:.2}",
                    rows.len()
                )),
                Err(_) => self
                    .lines
                    .push(format!("[{label}.channel] id={id} n={} rho=NA", rows.len())),
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.render()).map_err(CliError::from)
    }
}
