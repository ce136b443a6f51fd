//! Goal-oriented multiple access for networked intelligent systems.
//!
//! The crate covers the analytical side (SINR success probability,
//! delivery-failure and steady-state error probabilities, effectiveness
//! features and the activation-probability optimizer) and a Monte Carlo
//! simulator of the full sensing/transmission/decoding loop used to validate
//! the analytics.

pub mod channel;
pub mod config;
pub mod effectiveness;
pub mod error;
pub mod instance;
pub mod model;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use config::ExperimentConfig;
pub use effectiveness::{FeatureReport, Weights};
pub use instance::{Activation, Instance};
pub use optimizer::{OptimizerConfig, Solution};
pub use policy::SchemeKind;
