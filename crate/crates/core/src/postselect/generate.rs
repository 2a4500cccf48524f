//! Parallel outcome generation: simulate → measure → estimate, one
//! trajectory per seed. Outputs keep seed order, so results are independent
//! of how the worker pool schedules trajectories.

use rayon::prelude::*;

use crate::error::Result;
use crate::filter::{FilterKernel, Quadrature};
use crate::fock::{simulate_fock_trajectory_adaptive, FockOperators, FockState};
use crate::gaussian::{simulate_with_schedule, CovarianceSchedule, GaussianState1, SingleSiteParams};
use crate::postselect::fast::LatticeOutcomeSampler;
use crate::postselect::outcome::TrajectoryOutcome;
use crate::postselect::sample::{compute_estimators, sample_measurement_fock, sample_measurement_single};
use crate::stochastic::{SeedSpec, TimeGrid};

/// Salt separating the final-measurement stream from the record noise.
const MEASUREMENT_SALT: u64 = 0x6d65_6173;

/// Gaussian single-site trajectories from `init`; estimator and outcome at
/// the end of `grid`.
pub fn single_site_outcomes(
    params: &SingleSiteParams,
    init: &GaussianState1,
    grid: &TimeGrid,
    kernel: &FilterKernel,
    quadrature: Quadrature,
    seeds: &[SeedSpec],
) -> Result<Vec<TrajectoryOutcome>> {
    let schedule = CovarianceSchedule::new(params, init.covariances(), grid)?;
    let t_obs = grid.t_end();
    seeds
        .par_iter()
        .map(|seed| {
            let (traj, record) = simulate_with_schedule(params, init, &schedule, grid, seed)?;
            let est = compute_estimators(&record, kernel, &[0], t_obs)?;
            let mut rng = seed.derive(MEASUREMENT_SALT).rng();
            let meas = sample_measurement_single(traj.final_state(), quadrature, &mut rng);
            TrajectoryOutcome::new(seed.trajectory_index, est, vec![meas], t_obs)
        })
        .collect()
}

/// Number-basis SSE trajectories from `psi0`; the outcome is drawn from the
/// final state's quadrature density.
pub fn fock_outcomes(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    kernel: &FilterKernel,
    quadrature: Quadrature,
    seeds: &[SeedSpec],
) -> Result<Vec<TrajectoryOutcome>> {
    let t_obs = grid.t_end();
    seeds
        .par_iter()
        .map(|seed| {
            let traj = simulate_fock_trajectory_adaptive(params, psi0, ops, grid, seed, usize::MAX)?;
            let est = compute_estimators(&traj.record, kernel, &[0], t_obs)?;
            let mut rng = seed.derive(MEASUREMENT_SALT).rng();
            let meas = sample_measurement_fock(&traj.final_state, quadrature, &mut rng)?;
            TrajectoryOutcome::new(seed.trajectory_index, est, vec![meas], t_obs)
        })
        .collect()
}

/// Lattice trajectories through the momentum-space sampler, keeping only
/// `sites`.
pub fn lattice_outcomes(
    sampler: &LatticeOutcomeSampler,
    sites: &[usize],
    seeds: &[SeedSpec],
) -> Result<Vec<TrajectoryOutcome>> {
    let t_obs = sampler.t_obs();
    seeds
        .par_iter()
        .map(|seed| {
            let s = sampler.sample(seed, false)?;
            let est = sites.iter().map(|&i| s.estimators[i]).collect();
            let meas = sites.iter().map(|&i| s.measured[i]).collect();
            TrajectoryOutcome::new(seed.trajectory_index, est, meas, t_obs)
        })
        .collect()
}
