//! Competitor estimators and the shared derivative-free optimizer.

pub mod cmaes;
pub mod hinge;
pub mod median;
pub mod mle;

pub use cmaes::{cmaes_maximize, cmaes_maximize_multi, CmaesOutcome, OptimizerSettings};
pub use hinge::{hinge_init, hinge_objective};
pub use median::{median_criterion, median_estimate, MedianResult};
pub use mle::{log_likelihood, log_likelihood_derivs, mle, MleResult};
