//! ρ-estimation for regression in one-parameter exponential families.
//!
//! The crate provides the Hellinger-type loss and variance-stabilizing
//! parametrizations ([`expfam`]), regression models ([`models`]), the
//! ρ-estimator ([`rho`]), maximum-likelihood and median baselines
//! ([`baselines`]) and a Monte-Carlo harness ([`simlab`]).

pub mod baselines;
pub mod data;
pub mod error;
pub mod expfam;
pub mod models;
pub mod numeric;
pub mod rho;
pub mod simlab;

pub use data::{Dataset, RowFlag};
pub use error::{Error, Result};
pub use expfam::{GeneralParametrization, Interval, NaturalExpFamily, ParamMap, ParametrizationKind};
pub use models::{ModelKind, RegressionModel, SearchBox};
pub use rho::{rho_estimate, upsilon, RhoConfig, RhoFitResult, KAPPA};
