//! CSV persistence for trajectories, sweeps and rate experiments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalRecord, RateReport, SweepCell, SweepResult, Trajectory};
use crate::{Error, Result};

/// Columns: step, loss, grad_norm, min_grad_norm, cum_seconds.
pub fn write_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    write_rows(&trajectory.records, path)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    read_rows(path)
}

/// Columns: lr, param_value, seed, final_metric.
pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_rows(&result.cells, path)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepCell>> {
    read_rows(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub steps: u64,
    pub seed_index: usize,
    pub min_grad_norm: f64,
}

/// Columns: steps, seed_index, min_grad_norm.
pub fn write_rate_csv(report: &RateReport, path: &Path) -> Result<()> {
    let rows: Vec<RateRow> = report
        .points
        .iter()
        .flat_map(|p| {
            p.per_seed.iter().enumerate().map(|(i, &m)| RateRow {
                steps: p.steps,
                seed_index: i,
                min_grad_norm: m,
            })
        })
        .collect();
    write_rows(&rows, path)
}

pub fn read_rate_csv(path: &Path) -> Result<Vec<RateRow>> {
    read_rows(path)
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
