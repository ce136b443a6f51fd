//! Shared fixtures for the criterion benches.

use goemax_core::{ExperimentConfig, Instance};

/// Reference deployment scaled to `num_isas` ISAs.
pub fn reference_instance(num_isas: usize) -> Instance {
    ExperimentConfig {
        num_isas,
        ..ExperimentConfig::default()
    }
    .instance(0)
    .expect("reference deployment is valid")
}
