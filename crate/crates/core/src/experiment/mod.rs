//! Configuration, ensemble orchestration and figure-reproduction pipelines.

pub mod config;
pub mod figures;
pub mod output;
pub mod pipelines;

pub use crate::stochastic::seed_plan;
pub use config::{
    EnsembleConfig, ExperimentConfig, GridConfig, InitSpec, KernelSource, ModelConfig, ModelKind, OutputConfig,
    ProtocolConfig, KEY_REFERENCE,
};
pub use figures::{fitted_decay_length, kp_momentum_sum, reproduce_figure, FigureOptions, FIGURES};
pub use output::{PipelineReport, RunOutput, Sidecar};
pub use pipelines::{
    designed_from_closed_form, empirical_tables, run_pipeline, single_mode_outcomes, single_site_kernel, Pipeline,
};
