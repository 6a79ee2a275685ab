//! Decentralized online learning for multi-user resource sharing.
//!
//! Users repeatedly pick resources whose rewards depend on a random state and
//! on how many users share them. Each user sees only its own reward and the
//! congestion on its resource. The crate provides the environments, the
//! allocation search and theory constants, the two learning algorithms
//! ([`dloe`] for user-independent rewards, [`dlc`] for user-specific rewards
//! with communication) and a lockstep simulator with regret metrics.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the simulator uses throughout.

pub mod allocation;
pub mod constants;
pub mod dlc;
pub mod dloe;
pub mod error;
pub mod estimator;
mod linalg;
pub mod markov;
pub mod plan;
pub mod rewards;
pub mod scalar;
pub mod scenario;
pub mod schedule;
pub mod sim;

pub use allocation::{AllocationCount, Assignment, SearchLimits};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use scenario::Scenario;

pub type MeanTable = allocation::MeanTable<f64>;
pub type UserMeanTable = allocation::UserMeanTable<f64>;
pub type MeanTableF32 = allocation::MeanTable<f32>;
pub type UserMeanTableF32 = allocation::UserMeanTable<f32>;
pub type MarkovChain = markov::MarkovChain<f64>;
pub type MarkovChainF32 = markov::MarkovChain<f32>;
pub type MarkovBoundParams = markov::MarkovBoundParams<f64>;
pub type EstimatorBank = estimator::EstimatorBank<f64>;
pub type OsaParams = rewards::OsaParams<f64>;
