//! Stochastic SIR modelling with non-homogeneous mixing: simulation, interval
//! transition probabilities and Bayesian inference.

pub mod engines;
pub mod error;
pub mod inference;
pub mod model;
pub mod reconstruction;
pub mod rng;
pub mod sim;
pub mod synthetic;

pub use error::{Error, ErrorCategory, Result};
pub use model::{
    ActiveRates, CumulativeState, EventKind, ModelParams, SeasonalityMap, SirState, Trajectory,
};
