//! Exhaustive hyperparameter search scored by MOTA.
//!
//! A grid file lists named axes:
//!
//! ```toml
//! [[axis]]
//! name = "match_iou_stage1"
//! values = [0.2, 0.3, 0.4]
//!
//! [[axis]]
//! name = "lost_buffer_frames"
//! values = [3, 9]
//! ```
//!
//! Cells are enumerated with the first axis varying slowest, so the cell
//! index is the lexicographic order of the value positions.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::MotSummary;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "axis")]
    pub axes: Vec<GridAxis>,
}

/// One grid point: `(axis name, value)` in axis order.
pub type GridCell = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: GridCell,
    pub outcome: std::result::Result<MotSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the winning cell, if any cell succeeded.
    pub best: Option<usize>,
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: GridSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("grid has no axes".into()));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.is_empty() {
                return Err(Error::Config(format!("axis {:?} has no values", a.name)));
            }
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("axis {:?} listed twice", a.name)));
            }
            if let Some(v) = a.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Config(format!("axis {:?} has non-finite value {v}", a.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> Vec<GridCell> {
        let mut cells: Vec<GridCell> = vec![Vec::new()];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((axis.name.clone(), v));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

/// Whether `a` beats `b`: higher MOTA, then fewer identity switches.
/// Equal cells leave the earlier one in place.
fn better(a: &MotSummary, b: &MotSummary) -> bool {
    a.mota > b.mota || (a.mota == b.mota && a.idsw < b.idsw)
}

/// Evaluates every cell (in parallel) and picks the best one. A runner
/// error marks its cell failed without stopping the search.
pub fn grid_search<F>(grid: &GridSpec, runner: F) -> Result<GridResult>
where
    F: Fn(&GridCell) -> Result<MotSummary> + Sync,
{
    grid.validate()?;
    let rows: Vec<GridRow> = grid
        .cells()
        .into_par_iter()
        .map(|params| {
            let outcome = runner(&params).map_err(|e| e.to_string());
            GridRow { params, outcome }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        match &row.outcome {
            Ok(s) => {
                let replace = match best {
                    None => true,
                    Some(b) => better(s, rows[b].outcome.as_ref().expect("best cell succeeded")),
                };
                if replace {
                    best = Some(i);
                }
            }
            Err(e) => log::warn!("grid cell {} failed: {e}", format_cell(&row.params)),
        }
    }
    Ok(GridResult { rows, best })
}

pub fn format_cell(cell: &GridCell) -> String {
    cell.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

impl GridResult {
    pub fn best_row(&self) -> Option<&GridRow> {
        self.best.map(|i| &self.rows[i])
    }

    pub fn failures(&self) -> impl Iterator<Item = &GridRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }

    /// One column per axis, then `mota,fp,fn,idsw,gt_count,error`.
    pub fn write_table<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self
            .rows
            .first()
            .map(|r| r.params.iter().map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        header.extend(["mota", "fp", "fn", "idsw", "gt_count", "error"].map(String::from));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.params.iter().map(|(_, v)| v.to_string()).collect();
            match &row.outcome {
                Ok(s) => rec.extend([
                    format!("{:.6}", s.mota),
                    s.fp.to_string(),
                    s.fn_.to_string(),
                    s.idsw.to_string(),
                    s.gt_count.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    rec.extend(std::iter::repeat_n(String::new(), 5));
                    rec.push(e.clone());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()
    }
}
