//! Shared fixtures for the criterion benchmarks.

use btmf_core::{generate_planted, ObservationSet, SynthConfig};

/// A mid-size planted dataset reused across benchmarks.
pub fn bench_dataset(columns: usize) -> ObservationSet {
    generate_planted(&SynthConfig {
        n_strain: 10,
        n_temp: 10,
        columns,
        rank: 4,
        seed: 7,
        ..SynthConfig::default()
    })
    .expect("valid config")
    .observations
}
