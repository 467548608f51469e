//! Bayesian joint models for a longitudinal outcome and a time-to-event
//! outcome. The hazard is fitted as a piecewise-exponential model on
//! augmented data, both outcomes share a structured additive predictor, and
//! inference is by MCMC.

pub mod basis;
pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod design;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod ped;
pub mod posterior;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
