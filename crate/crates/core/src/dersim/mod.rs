//! Discrete elastic rod networks without twist: stretch and bend energies,
//! exact forces and Hessians, and implicit time stepping with a vibrating grasp node.

pub mod checks;
pub mod energy;
pub mod integrator;
pub mod kinematics;
pub mod network;

use thiserror::Error;

pub use energy::{elastic_term_registry, Bend, ElasticModel, ElasticTerm, NegatedForce, Stretch};
pub use integrator::{
    run, static_solve, Actuation, ElasticState, NewtonParams, NewtonStats, RunOutput, SimConfig, Simulator, TimeSeries, GRAVITY,
};
pub use kinematics::{axial_strain, curvature_binormal, material_curvatures};
pub use network::{EdgeFrame, MaterialParams, NetworkFile, RodEdge, RodNetwork, SkeletonRodMap};

#[derive(Debug, Error)]
pub enum DerError {
    #[error("invalid rod network: {0}")]
    InvalidNetwork(String),
    #[error("edge {edge} is degenerate (rest length {length:e} m)")]
    DegenerateSegment { edge: usize, length: f64 },
    #[error("adjacent edges fold back onto each other{}", spring.map(|s| format!(" at bend spring {s}")).unwrap_or_default())]
    AntiparallelEdges { spring: Option<usize> },
    #[error("Newton iteration diverged at step {step} (residuals {residuals:?})")]
    NewtonDivergence { step: usize, residuals: Vec<f64> },
    #[error("singular linear system at step {step}")]
    SingularSystem { step: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}
