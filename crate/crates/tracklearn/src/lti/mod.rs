//! Discrete-time LTI MIMO systems: representation, simulation, lifted
//! (trial-long) maps, vector relative degree and minimum-phase analysis.

mod dlti;
mod eig;
mod lifted;
mod model;
mod reference;
mod relative_degree;
mod zero_dynamics;

pub(crate) use dlti::Dlti;
pub(crate) use eig::robust_complex_eigenvalues;
pub(crate) use model::numerical_rank;
pub use lifted::{stack_samples, unstack_samples, LiftedModel};
pub use model::{SimulationResult, StateSpaceModel};
pub use reference::discretize_reference;
pub use relative_degree::{
    estimate_relative_degree_from_steps, vector_relative_degree, StepEstimate,
    StepExperimentRecord, VectorRelativeDegree, DEFAULT_MARKOV_TOL,
};
pub use zero_dynamics::{minimum_phase_check, MinimumPhaseReport, DEFAULT_STABILITY_TOL};
