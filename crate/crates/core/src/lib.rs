//! Rotating-frame simulation of an NV-type electron spin driving synchronous
//! gates on three spin-1 nuclei under dynamical-decoupling control.
//!
//! Layers, bottom up: [`linalg`] and [`spin`] build operators and parameters,
//! [`pulse`] turns CPMG schedules into filter functions, [`evolution`]
//! propagates unitaries and density matrices, [`gates`] holds targets and
//! protocols, [`metrics`] scores them and [`scenario`] / [`output`] produce
//! the tabulated datasets.

pub mod evolution;
pub mod gates;
pub mod linalg;
pub mod metrics;
pub mod output;
pub mod pulse;
pub mod scenario;
pub mod spin;
pub mod svg;

pub use evolution::{
    propagate_lindblad, propagate_unitary, PropagationOptions, RotatingFrameModel, StepRule,
};
pub use gates::{synchronous_gate, Herald, Subspace, SynchronousKind};
pub use linalg::{ComplexMatrix, DensityMatrix, StateVector};
pub use metrics::{relative_avg_gate_fidelity, state_fidelity, FidelityConvention};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioData, ScenarioKind};
pub use spin::{b_op, derive_params, DerivedParams, HyperfineSet, PhysicalConstants};
