//! Per-iteration run records and their CSV/JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::Algorithm;
use crate::error::Result;
use crate::objective::SuiteConstants;

/// One row of the trace CSV. Columns absent for an algorithm are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// `‖x(k) - x*‖_F / ‖x(0) - x*‖_F` (unnormalized when `x(0) = x*`).
    pub residual: f64,
    /// `‖x̌(k)‖_F`.
    pub cons_viol_x: f64,
    /// `‖y̌(k)‖_F`, or `‖ȟ(k)‖_F` for push runs.
    pub cons_viol_y: Option<f64>,
    /// `‖1ᵀy(k) - 1ᵀ∇f(x(k))‖`.
    pub conservation_err: Option<f64>,
    pub v_min: Option<f64>,
}

/// Unnormalized series consumed by the arrow audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub k: usize,
    /// `‖x(k) - 1x*ᵀ‖_F`.
    pub q: f64,
    /// `‖∇f(x(k)) - ∇f(x(k-1))‖_F`, zero at `k = 0`.
    pub z: f64,
    pub y_check: Option<f64>,
    pub x_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    /// Constant step, or the `a` of a diminishing schedule.
    pub alpha: f64,
    pub schedule: String,
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
    pub graph: String,
    pub weights: String,
    pub graph_seed: Option<u64>,
    pub problem_seed: Option<u64>,
    pub constants: SuiteConstants,
    /// `‖x̄(0) - x*‖`.
    pub initial_gap: f64,
    /// Declared connectivity window of the sequence, if any.
    pub b: Option<usize>,
    pub delta: Option<f64>,
    pub termination: Option<String>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: RunMeta,
    pub rows: Vec<TraceRow>,
    pub series: Vec<SeriesRow>,
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn rows_from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Header written even for an empty trace.
pub const TRACE_HEADER: &str = "k,residual,cons_viol_x,cons_viol_y,conservation_err,v_min";

pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl RunTrace {
    pub fn final_residual(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }

    pub fn rows_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Ok(format!("{TRACE_HEADER}\n"));
        }
        rows_to_csv(&self.rows)
    }

    pub fn parse_rows(text: &str) -> Result<Vec<TraceRow>> {
        rows_from_csv(text)
    }

    /// Writes the trace CSV at `path` plus `<path>.series.csv` and `<path>.meta.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.rows_csv()?)?;
        fs::write(sidecar(path, ".series.csv"), rows_to_csv(&self.series)?)?;
        fs::write(sidecar(path, ".meta.json"), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let rows = Self::parse_rows(&fs::read_to_string(path)?)?;
        let series = rows_from_csv(&fs::read_to_string(sidecar(path, ".series.csv"))?)?;
        let meta = serde_json::from_str(&fs::read_to_string(sidecar(path, ".meta.json"))?)?;
        Ok(Self { meta, rows, series })
    }
}
