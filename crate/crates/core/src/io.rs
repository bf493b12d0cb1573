//! The matrix file format and atomic writing.
//!
//! Layout (comma-separated text):
//!
//! ```text
//! 2015-06-01T00:00:00+00:00,600
//! time,,0,1,2,3
//! S1-1,strain,12.5,,13.1,NaN
//! T1-1,temperature,21.0,21.1,21.2,21.3
//! ```
//!
//! Row 1 carries the RFC 3339 start timestamp and the sample interval in
//! seconds. Row 2 lists the file-local column indices `0..T-1`. Every later
//! row is `channel_id,group,value...`; an empty field or the literal token
//! `NaN` marks a missing observation. Values are written in shortest
//! round-trip decimal form, so write-then-read reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ObservationSet;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string())
    ));
    std::fs::write(&tmp, content).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Serialize an observation set to the matrix format.
pub fn matrix_to_string(obs: &ObservationSet) -> String {
    let (m, t) = (obs.n_channels(), obs.n_columns());
    let mut out = String::with_capacity(m * t * 12 + 64);
    let _ = writeln!(
        out,
        "{},{}",
        obs.start_timestamp().to_rfc3339(),
        obs.sample_interval_secs()
    );
    out.push_str("time,");
    for idx in 0..t {
        let _ = write!(out, ",{idx}");
    }
    out.push('\n');
    for i in 0..m {
        out.push_str(&obs.channel_ids()[i]);
        out.push(',');
        out.push_str(&obs.channel_groups()[i]);
        for c in 0..t {
            out.push(',');
            if obs.is_observed(i, c) {
                let _ = write!(out, "{}", obs.value(i, c));
            }
        }
        out.push('\n');
    }
    out
}

/// Write an observation set to a matrix file (atomically).
pub fn write_matrix(path: &Path, obs: &ObservationSet) -> Result<()> {
    write_atomic(path, &matrix_to_string(obs))
}

fn parse_err(line: usize, field: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field,
        message: message.into(),
    }
}

/// Parse an observation set from matrix-format text.
pub fn matrix_from_str(text: &str) -> Result<ObservationSet> {
    let mut lines = text.lines().enumerate();

    let (lno, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 2 {
        return Err(parse_err(
            lno + 1,
            fields.len(),
            "header must be <rfc3339 timestamp>,<interval seconds>",
        ));
    }
    let start = DateTime::parse_from_rfc3339(fields[0])
        .map_err(|e| parse_err(lno + 1, 1, format!("bad timestamp: {e}")))?;
    let interval: u64 = fields[1]
        .parse()
        .map_err(|e| parse_err(lno + 1, 2, format!("bad interval: {e}")))?;

    let (lno, index_row) = lines
        .next()
        .ok_or_else(|| parse_err(2, 1, "missing time-index row"))?;
    let fields: Vec<&str> = index_row.split(',').collect();
    if fields.len() < 3 || fields[0] != "time" || !fields[1].is_empty() {
        return Err(parse_err(lno + 1, 1, "second row must be time,,0,1,..."));
    }
    let t_len = fields.len() - 2;
    for (k, f) in fields[2..].iter().enumerate() {
        let idx: usize = f
            .parse()
            .map_err(|e| parse_err(lno + 1, k + 3, format!("bad time index: {e}")))?;
        if idx != k {
            return Err(parse_err(
                lno + 1,
                k + 3,
                format!("time index {idx} out of order (expected {k})"),
            ));
        }
    }

    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    let mut rows: Vec<(f64, u8)> = Vec::new();
    for (lno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != t_len + 2 {
            return Err(parse_err(
                lno + 1,
                fields.len(),
                format!(
                    "ragged row: expected {} fields, got {}",
                    t_len + 2,
                    fields.len()
                ),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(parse_err(lno + 1, 1, "empty channel id"));
        }
        if ids.iter().any(|existing| existing == id) {
            return Err(parse_err(
                lno + 1,
                1,
                format!("duplicate channel id {id:?}"),
            ));
        }
        ids.push(id.to_string());
        groups.push(fields[1].to_string());
        for (k, f) in fields[2..].iter().enumerate() {
            if f.is_empty() || *f == "NaN" {
                rows.push((f64::NAN, 0));
            } else {
                let v: f64 = f
                    .parse()
                    .map_err(|e| parse_err(lno + 1, k + 3, format!("bad value: {e}")))?;
                if !v.is_finite() {
                    return Err(parse_err(lno + 1, k + 3, "non-finite value"));
                }
                rows.push((v, 1));
            }
        }
    }
    if ids.is_empty() {
        return Err(parse_err(3, 1, "no data rows"));
    }

    let m = ids.len();
    let values = DMatrix::from_fn(m, t_len, |i, t| rows[i * t_len + t].0);
    let mask = DMatrix::from_fn(m, t_len, |i, t| rows[i * t_len + t].1);
    ObservationSet::new(values, mask, ids, groups, interval, start)
}

/// Read an observation set from a matrix file.
pub fn read_matrix(path: &Path) -> Result<ObservationSet> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    matrix_from_str(&text)
}

/// Interpret an observation set holding 0/1 values as a mask matrix.
pub fn observation_set_to_mask(obs: &ObservationSet) -> Result<DMatrix<u8>> {
    let (m, t) = (obs.n_channels(), obs.n_columns());
    let mut mask = DMatrix::zeros(m, t);
    for i in 0..m {
        for c in 0..t {
            if !obs.is_observed(i, c) {
                return Err(Error::Config(format!(
                    "mask file has a missing entry at ({i}, {c})"
                )));
            }
            let v = obs.value(i, c);
            mask[(i, c)] = if v == 0.0 {
                0
            } else if v == 1.0 {
                1
            } else {
                return Err(Error::Config(format!(
                    "mask file entry {v} at ({i}, {c}) is not 0 or 1"
                )));
            };
        }
    }
    Ok(mask)
}

/// Wrap a mask as an observation set sharing a template's channel metadata,
/// so masks round-trip through the same file format as data.
pub fn mask_to_observation_set(
    mask: &DMatrix<u8>,
    template: &ObservationSet,
) -> Result<ObservationSet> {
    let values = mask.map(|v| v as f64);
    ObservationSet::fully_observed(
        values,
        template.channel_ids().to_vec(),
        template.channel_groups().to_vec(),
        template.sample_interval_secs(),
        template.start_timestamp(),
    )
}
