//! Shared fixtures for the benchmarks: one short but real experiment run, so
//! every benchmark operates on parameters and updates with the statistics the
//! hot paths actually see (post-training deltas, not white noise).

use fedval_core::engine::{self, ExperimentRun};
use fedval_core::ExperimentConfig;

/// A reduced quantity-setting run: default architecture, 12 rounds, smaller
/// pool. Takes about a second to train; benchmarks share one instance.
pub fn short_run() -> (ExperimentConfig, ExperimentRun) {
    let cfg = ExperimentConfig {
        rounds: 12,
        n_train: 600,
        n_val: 120,
        ..ExperimentConfig::default()
    };
    let run = engine::run_experiment(&cfg).expect("fixture run trains");
    (cfg, run)
}

/// Shuffled ranking pair for rank-correlation benchmarks.
pub fn ranking_pair(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let reference: Vec<usize> = (1..=n).collect();
    let mut estimate = reference.clone();
    estimate.shuffle(&mut fedval_core::rng::rng_from(seed));
    (reference, estimate)
}
