//! Exact Gaussian-sector dynamics of the monitored bosons.

pub mod lattice;
pub mod momentum;
pub mod single;

pub use lattice::{
    correlation_length, correlator_profile, covariance_history_lattice, dispersion,
    inverse_transform_even, means_step_lattice, riccati_rhs_lattice, riccati_step_lattice,
    simulate_trajectory_lattice, steady_state_lattice, CorrelatorProfile, FreeRotation, GaussianLatticeState,
    LatticeParams, LatticeTrajectory, SteadyCovariances,
};
pub use momentum::{
    simulate_trajectory_lattice_fft, unconditional_profile, LatticeFft, ModePairs, ModeSchedules,
};
pub use single::{
    filter_record_single, means_step_single, memory_time_closed_form, riccati_rhs,
    riccati_step_single, simulate_trajectory_single, simulate_with_schedule, steady_state_single,
    unconditional_second_moments, unconditional_variance_single, CovarianceSchedule,
    GaussianState1, SingleSiteParams, SteadyState1, TrajectorySingle,
};
