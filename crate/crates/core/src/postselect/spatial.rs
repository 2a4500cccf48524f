//! Single-trajectory correlator estimates from averages over well-separated
//! lattice sites, in place of averages over repeated runs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::{CorrelatorAccumulator, CorrelatorTables, Detrend};
use crate::gaussian::SingleSiteParams;
use crate::stochastic::MeasurementRecord;

/// Minimum number of disjoint windows for a spatial average.
pub const MIN_WINDOWS: usize = 8;

/// Block-averaged lag window used to build the tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagWindow {
    pub block_steps: usize,
    pub n_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAverage {
    pub spacing: usize,
    pub n_windows: usize,
    pub tables: CorrelatorTables,
    /// Tables at twice the spacing, when enough windows remain.
    pub doubled: Option<CorrelatorTables>,
    /// Largest per-lag shift of `S` under doubling, in units of the combined
    /// standard error.
    pub max_shift_in_stderr: Option<f64>,
}

fn tables_at(
    record: &MeasurementRecord,
    measured: &[f64],
    spacing: usize,
    window: LagWindow,
    n_obs: usize,
    t_obs: f64,
    detrend: Detrend,
    constraints: Option<SingleSiteParams>,
) -> Result<(usize, CorrelatorTables)> {
    let v = record.sites();
    let sites: Vec<usize> = (0..v).step_by(spacing).filter(|&s| s + spacing <= v).collect();
    if sites.len() < MIN_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "{} windows at spacing {spacing}; at least {MIN_WINDOWS} needed",
            sites.len()
        )));
    }
    let mut acc = CorrelatorAccumulator::new(record.grid().dt, window.block_steps, window.n_blocks, n_obs)?;
    for &s in &sites {
        acc.push(record.site(s), measured[s])?;
    }
    Ok((sites.len(), acc.finish(t_obs, detrend, constraints)?))
}

/// Estimates `S` and `g` at `t_obs` from one chain record and one measured
/// snapshot, averaging over sites `0, spacing, 2·spacing, …`.
pub fn spatial_average_correlators(
    record: &MeasurementRecord,
    measured: &[f64],
    spacing: usize,
    window: LagWindow,
    t_obs: f64,
    detrend: Detrend,
    constraints: Option<SingleSiteParams>,
) -> Result<SpatialAverage> {
    if record.lengths().len() != 1 {
        return Err(invalid("record", "spatial averaging is implemented for chains"));
    }
    if measured.len() != record.sites() {
        return Err(Error::ShapeMismatch("snapshot and record differ in sites".into()));
    }
    if spacing == 0 {
        return Err(invalid("spacing", "must be positive"));
    }
    let n_obs = record.grid().index_of(t_obs)?;
    let (n_windows, tables) = tables_at(record, measured, spacing, window, n_obs, t_obs, detrend, constraints)?;
    let doubled = tables_at(record, measured, 2 * spacing, window, n_obs, t_obs, detrend, constraints)
        .ok()
        .map(|(_, t)| t);
    let max_shift_in_stderr = doubled.as_ref().map(|d| {
        tables
            .s
            .iter()
            .zip(&tables.s_stderr)
            .zip(d.s.iter().zip(&d.s_stderr))
            .map(|((a, sa), (b, sb))| {
                let se = (sa * sa + sb * sb).sqrt();
                if se > 0.0 { (a - b).abs() / se } else { 0.0 }
            })
            .fold(0.0, f64::max)
    });
    Ok(SpatialAverage {
        spacing,
        n_windows,
        tables,
        doubled,
        max_shift_in_stderr,
    })
}
