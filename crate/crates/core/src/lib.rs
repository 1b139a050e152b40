//! Online planning for partially observable problems by sparse sampling.
//!
//! The crate is organised around a small problem contract ([`Pomdp`]) and the
//! planners that consume it:
//!
//! * [`pomdp`]: the generative problem contract, weighted particle beliefs and
//!   the exact Bayesian filter used for closed-loop evaluation.
//! * [`estimator`]: the self-normalized importance-sampling estimator and the
//!   concentration / width bounds that govern weighted sparse sampling.
//! * [`solvers`]: POSS and POWSS sparse-sampling planners, QMDP, and an exact
//!   finite-horizon expectimax oracle.
//! * [`problems`]: the continuous-observation tiger problem and a deterministic
//!   chain problem used as a smoke test.
//! * [`harness`]: reproducible width sweeps, closed-loop evaluation and result
//!   serialization.

// `!(x > 0.0)` is used deliberately so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod harness;
pub mod pomdp;
pub mod problems;
pub mod solvers;

mod format;

pub use estimator::{BoundsReport, EstimatorError};
pub use pomdp::{
    ExactBelief, FiniteStates, GenerativeOutcome, LosslessObservations, Pomdp, PomdpError,
    WeightedParticleSet,
};
pub use solvers::{Planner, QEstimates, SolverConfig, SolverError, SolverKind};
