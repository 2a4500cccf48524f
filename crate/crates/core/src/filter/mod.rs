//! Estimator kernels: analytic, continuum and designed from data.

pub mod analytic;
pub mod continuum;
pub mod correlators;
pub mod cost;
pub mod fit;
pub mod kernel;
pub mod wiener_hopf;

pub use analytic::{
    analytic_filter_shape, analytic_filter_single, analytic_filter_single_default,
    analytic_kernels_lattice, analytic_kernels_lattice_with, design_filter_ode, filter_ode_roots,
    lattice_kernel_direct, ode_root_residual, signed_offset, FilterShape, KpConvention,
    ModalFilter, KERNEL_CUTOFF,
};
pub use continuum::{argmax_offset, continuum_kernel_kp, continuum_regime, continuum_velocity};
pub use correlators::{
    appendix_c_tables, CorrelatorAccumulator, CorrelatorTables, Detrend, TableStructure,
};
pub use cost::{cost_surrogate, CostAccumulator, CostEstimate};
pub use fit::{fit_damped_cosine, DampedCosineFit};
pub use kernel::{FilterKernel, Generator, KernelMetadata, Quadrature, Truncation};
pub use wiener_hopf::{design_filter_wiener_hopf, DesignedFilter, DEFAULT_RIDGE};
