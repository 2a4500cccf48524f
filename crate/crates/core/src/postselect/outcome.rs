//! Per-trajectory `(estimator, measured)` pairs and their tabular forms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Estimators and final projective measurement outcomes of one trajectory,
/// indexed by site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub trajectory_index: u64,
    pub estimators: Vec<f64>,
    pub measured: Vec<f64>,
    pub t_obs: f64,
}

impl TrajectoryOutcome {
    pub fn new(trajectory_index: u64, estimators: Vec<f64>, measured: Vec<f64>, t_obs: f64) -> Result<Self> {
        if estimators.len() != measured.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} estimators vs {} measured values",
                estimators.len(),
                measured.len()
            )));
        }
        if estimators.iter().chain(&measured).any(|v| !v.is_finite()) {
            return Err(invalid("outcome", "entries must be finite"));
        }
        Ok(Self {
            trajectory_index,
            estimators,
            measured,
            t_obs,
        })
    }

    pub fn sites(&self) -> usize {
        self.estimators.len()
    }
}

/// Estimator and measured columns for `site` across `outcomes`.
pub fn site_columns(outcomes: &[TrajectoryOutcome], site: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if outcomes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut est = Vec::with_capacity(outcomes.len());
    let mut meas = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if site >= o.sites() {
            return Err(invalid("site", format!("{site} ≥ {} recorded sites", o.sites())));
        }
        est.push(o.estimators[site]);
        meas.push(o.measured[site]);
    }
    Ok((est, meas))
}

/// Outcome table with columns `trajectory, site, estimator, measured`.
pub fn write_outcomes_csv<W: Write>(outcomes: &[TrajectoryOutcome], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["trajectory", "site", "estimator", "measured"])?;
    for o in outcomes {
        for (s, (e, m)) in o.estimators.iter().zip(&o.measured).enumerate() {
            wr.write_record(&[
                o.trajectory_index.to_string(),
                s.to_string(),
                format!("{e:.12e}"),
                format!("{m:.12e}"),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a table written by [`write_outcomes_csv`]; the observation time is
/// not stored and is set to `t_obs`.
pub fn read_outcomes_csv<R: std::io::Read>(r: R, t_obs: f64) -> Result<Vec<TrajectoryOutcome>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out: Vec<TrajectoryOutcome> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| invalid("outcome table", format!("bad field {i} in {row:?}")))
        };
        let traj = parse(0)? as u64;
        let site = parse(1)? as usize;
        let (e, m) = (parse(2)?, parse(3)?);
        if out.last().map(|o| o.trajectory_index) != Some(traj) {
            out.push(TrajectoryOutcome {
                trajectory_index: traj,
                estimators: Vec::new(),
                measured: Vec::new(),
                t_obs,
            });
        }
        let o = out.last_mut().expect("just pushed");
        if site != o.estimators.len() {
            return Err(invalid("outcome table", "sites must be listed in order"));
        }
        o.estimators.push(e);
        o.measured.push(m);
    }
    Ok(out)
}
