//! Control-and-learning toolkit for high-accuracy trajectory tracking that
//! transfers learned inputs between dynamically different plants and between
//! tasks (trajectories).
//!
//! The pieces fit together like this:
//!
//! - [`lti`]: discrete-time LTI MIMO models, simulation, lifted (trial-long)
//!   representations, vector relative degree and minimum-phase analysis.
//! - [`l1`]: an output-feedback adaptive controller that forces an uncertain
//!   plant to behave as a prescribed linear reference model, so inputs learned
//!   on one vehicle remain valid on another.
//! - [`ilc`]: optimization-based iterative learning control in the lifted
//!   domain, with an iteration-domain Kalman estimate of the repetitive
//!   disturbance and a constrained quadratic-program input update.
//! - [`transfer`]: relative-degree-structured linear regression that maps
//!   desired trajectories to tracking inputs and applies the map to unseen
//!   trajectories, with a state-based and an input/output-based variant.
//! - [`sim`]: deterministic simulated vehicles, a smooth trajectory library,
//!   the closed-loop rollout engine and the tracking-error metric.
//! - [`testkit`]: deterministic synthetic models and trajectories used by the
//!   test suites and benchmarks.

pub mod error;
pub mod ilc;
pub mod l1;
pub mod lti;
pub mod sim;
pub mod testkit;
pub mod transfer;

pub use error::{Error, Result};
pub use ilc::{IlcConfig, IlcState, IlcUpdater, LearningRecord};
pub use l1::{L1Config, L1State};
pub use lti::{LiftedModel, StateSpaceModel, StepExperimentRecord, VectorRelativeDegree};
pub use sim::{PlantModel, Trajectory};
pub use transfer::{StateReconstructor, TransferMap};
