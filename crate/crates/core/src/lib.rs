//! Quantum circuit Born machines on an exact state-vector simulator.
//!
//! The crate covers the full pipeline: gate kernels ([`statevec`]),
//! layered circuits on connectivity graphs and their hierarchical growth
//! ([`ansatz`]), adjoint gradients ([`gradients`]), discretized targets and
//! resolution-aware metrics ([`distributions`]), Adam training with seed
//! sweeps ([`trainer`]) and TOML experiment files ([`config`]).

pub mod ansatz;
pub mod config;
pub mod distributions;
pub mod error;
pub mod gradients;
pub mod statevec;
pub mod trainer;

pub use ansatz::{
    build_circuit, build_topology, expand_hierarchy, Circuit, Entangler, HierarchySchedule, HierarchyStage,
    InterRegister, Topology, TopologyKind,
};
pub use config::ExperimentConfig;
pub use distributions::{
    coarse_grain, expand_uniform, kl_divergence, sample_target, tv_at_resolution, tv_distance, ProbabilityVector,
    TargetSpec,
};
pub use error::{QcbmError, Result};
pub use gradients::{
    adjoint_gradient, count_gate_applications, finite_difference_gradient, forward, GradientMethod, LossKind,
    Simulator,
};
pub use statevec::{Gate, GateKind, StateVector};
pub use trainer::{
    adam_step, sweep, train, train_hierarchical, AdamConfig, AdamState, Experiment, Plan, SweepSummary, TrainConfig,
    TrainRecord,
};
