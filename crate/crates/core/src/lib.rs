//! Tabular Q-learning, double Q-learning and simultaneous double Q-learning
//! (SDQ), together with the vectorised switched-system view of SDQ used to
//! check its comparison-system orderings and finite-time error bounds.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the experiment harness uses.

pub mod agents;
pub mod bounds;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod switching;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mdp = mdp::TabularMdp<f64>;
pub type QTable = mdp::QTable<f64>;
pub type SamplingDistribution = mdp::SamplingDistribution<f64>;
