//! Sequential Bayesian inference of context matrices from multi-agent
//! behavioral time series.

pub mod domain;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use domain::{BehaviorFrame, BehaviorSeries, ContextMatrix, DynamicsParams};
pub use error::{Error, Result};
