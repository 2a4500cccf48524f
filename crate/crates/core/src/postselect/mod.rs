//! Recovery of conditional moments from records and final measurements:
//! estimators from the record, binning by estimator value, and pooled
//! within-bin statistics of the measured quadratures.

pub mod binning;
pub mod fast;
pub mod generate;
pub mod outcome;
pub mod sample;
pub mod spatial;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use binning::{
    bin2d_and_recover_covariance, bin2d_and_recover_covariance_with, bin_and_recover_variance,
    bin_and_recover_variance_with, moment_ratios, recover_covariance, recover_variance,
    BinSummary, BinnedStats, BinningOptions, Recovery,
};
pub use fast::{LatticeOutcomeSampler, LatticeSample};
pub use generate::{fock_outcomes, lattice_outcomes, single_site_outcomes};
pub use outcome::{read_outcomes_csv, site_columns, write_outcomes_csv, TrajectoryOutcome};
pub use sample::{
    compute_estimators, sample_measurement_fock, sample_measurement_lattice,
    sample_measurement_single, CovarianceFactor,
};
pub use spatial::{spatial_average_correlators, LagWindow, SpatialAverage, MIN_WINDOWS};

/// One point of a recovered profile with its independent reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: usize,
    pub recovered: f64,
    pub stderr: f64,
    pub analytic: f64,
}

/// Recovery summary written as JSON next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub quantity: String,
    pub n_trajectories: usize,
    pub n_bins: usize,
    pub points: Vec<ProfilePoint>,
    pub params: serde_json::Value,
}

impl RecoverySummary {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Whether every point is within `max(rel·|analytic|, n_se·stderr)`.
    pub fn within(&self, rel: f64, n_se: f64) -> bool {
        self.points
            .iter()
            .all(|p| (p.recovered - p.analytic).abs() <= (rel * p.analytic.abs()).max(n_se * p.stderr))
    }
}
