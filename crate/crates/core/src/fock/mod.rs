//! Truncated number-basis engine for non-Gaussian single-mode states.

pub mod decompose;
pub mod ops;
pub mod sse;
pub mod state;

pub use decompose::{
    decay_constant, decompose_appendix_b, gaussian_fixed_point, quadratic_generator,
    record_integrals,
};
pub use ops::FockOperators;
pub use sse::{
    propagate_record_driven, simulate_fock_trajectory, simulate_fock_trajectory_adaptive,
    simulate_fock_with_noise, sse_step_pure,
    sse_step_exponential_in_place, sse_step_pure_in_place, FockTrajectory, Workspace, MAX_ADAPTIVE_DIM,
};
pub use state::{husimi, linspace, FockMoments, FockState, HusimiGrid, HEALTH_THRESHOLD};
