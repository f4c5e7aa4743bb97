//! Asset × time IV panels with missingness handling.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IvObservation, RollingWindowSpec};
use crate::error::{Error, Result};
use crate::stats::fmt_g12;

/// Dense IV panel: one row per instrument, one column per grid timestamp.
/// `mask[r][c]` is true where the value was originally observed; imputed
/// cells carry filled values and a false mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMatrix {
    pub asset_ids: Vec<String>,
    pub timestamps: Vec<DateTime<Utc>>,
    /// Row-major values, `values[row][col]`.
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
}

impl PanelMatrix {
    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_timestamps(&self) -> usize {
        self.timestamps.len()
    }

    /// Column `col` as an owned vector (the per-timestamp cross-section).
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[col]).collect()
    }

    /// Contiguous sub-panel covering columns `[start, start+len)`.
    pub fn slice_columns(&self, start: usize, len: usize) -> PanelMatrix {
        PanelMatrix {
            asset_ids: self.asset_ids.clone(),
            timestamps: self.timestamps[start..start + len].to_vec(),
            values: self
                .values
                .iter()
                .map(|row| row[start..start + len].to_vec())
                .collect(),
            mask: self
                .mask
                .iter()
                .map(|row| row[start..start + len].to_vec())
                .collect(),
        }
    }

    /// Write the value matrix as delimited text plus a JSON sidecar holding
    /// asset ids, timestamps and the observation mask.
    pub fn write_files(&self, matrix_path: &Path, sidecar_path: &Path, header: Option<&str>) -> Result<()> {
        let mut f = std::fs::File::create(matrix_path)?;
        if let Some(h) = header {
            writeln!(f, "# {h}")?;
        }
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| fmt_g12(*v)).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        let sidecar = PanelSidecar {
            header: header.map(str::to_string),
            asset_ids: self.asset_ids.clone(),
            timestamps: self.timestamps.clone(),
            mask: self.mask.clone(),
        };
        let mut f = std::fs::File::create(sidecar_path)?;
        serde_json::to_writer_pretty(&mut f, &sidecar)
            .map_err(|e| Error::InvalidArgument(format!("sidecar encode: {e}")))?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read_files(matrix_path: &Path, sidecar_path: &Path) -> Result<PanelMatrix> {
        let sidecar: PanelSidecar =
            serde_json::from_reader(std::fs::File::open(sidecar_path)?)
                .map_err(|e| Error::Parse { line: 0, message: format!("sidecar: {e}") })?;
        let reader = BufReader::new(std::fs::File::open(matrix_path)?);
        let mut values = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(str::parse::<f64>).collect();
            values.push(row.map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("matrix row: {e}"),
            })?);
        }
        Ok(PanelMatrix {
            asset_ids: sidecar.asset_ids,
            timestamps: sidecar.timestamps,
            values,
            mask: sidecar.mask,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PanelSidecar {
    #[serde(skip_serializing_if = "Option::is_none")]
    header: Option<String>,
    asset_ids: Vec<String>,
    timestamps: Vec<DateTime<Utc>>,
    mask: Vec<Vec<bool>>,
}

/// Build the clustering panel from observations.
///
/// The timestamp grid spans min..max observation time at the spec's sampling
/// interval; every observation must land exactly on the grid. Instruments
/// observed on fewer than `missing_threshold` of the grid columns are
/// dropped; the remaining gaps are forward-filled then backward-filled, so no
/// missing values survive. Multiple observations of one instrument at one
/// timestamp are averaged (order independent).
pub fn build_panel(
    obs: &[IvObservation],
    spec: &RollingWindowSpec,
    missing_threshold: f64,
) -> Result<PanelMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("build_panel: observations"));
    }
    if !(missing_threshold > 0.0 && missing_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "missing threshold {missing_threshold} outside (0, 1]"
        )));
    }
    let interval = spec.sampling_interval.num_seconds();
    let t_min = obs.iter().map(|o| o.timestamp).min().expect("non-empty");
    let t_max = obs.iter().map(|o| o.timestamp).max().expect("non-empty");
    let span = (t_max - t_min).num_seconds();
    let n_cols = (span / interval) as usize + 1;
    if span % interval != 0 {
        return Err(Error::OffGridTimestamp {
            timestamp: t_max.to_rfc3339(),
            offset_secs: span % interval,
            interval_secs: interval,
        });
    }

    // instrument -> column -> (sum, count)
    let mut cells: BTreeMap<&str, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for o in obs {
        let off = (o.timestamp - t_min).num_seconds();
        if off % interval != 0 {
            return Err(Error::OffGridTimestamp {
                timestamp: o.timestamp.to_rfc3339(),
                offset_secs: off % interval,
                interval_secs: interval,
            });
        }
        let col = (off / interval) as usize;
        let entry = cells
            .entry(o.instrument_id.as_str())
            .or_default()
            .entry(col)
            .or_insert((0.0, 0));
        entry.0 += o.iv;
        entry.1 += 1;
    }

    let mut asset_ids = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (id, row_cells) in &cells {
        let observed = row_cells.len();
        if (observed as f64) < missing_threshold * n_cols as f64 {
            continue;
        }
        let mut row = vec![f64::NAN; n_cols];
        let mut row_mask = vec![false; n_cols];
        for (&col, &(sum, count)) in row_cells {
            row[col] = sum / count as f64;
            row_mask[col] = true;
        }
        // Forward fill, then backward fill the leading gap.
        let mut last = f64::NAN;
        for cell in row.iter_mut() {
            if cell.is_nan() {
                *cell = last;
            } else {
                last = *cell;
            }
        }
        let mut next = f64::NAN;
        for cell in row.iter_mut().rev() {
            if cell.is_nan() {
                *cell = next;
            } else {
                next = *cell;
            }
        }
        debug_assert!(row.iter().all(|v| v.is_finite()));
        asset_ids.push(id.to_string());
        values.push(row);
        mask.push(row_mask);
    }

    if asset_ids.len() < 2 {
        return Err(Error::TooFewAssets {
            kept: asset_ids.len(),
        });
    }
    let timestamps = (0..n_cols)
        .map(|c| t_min + chrono::Duration::seconds(c as i64 * interval))
        .collect();
    Ok(PanelMatrix {
        asset_ids,
        timestamps,
        values,
        mask,
    })
}
