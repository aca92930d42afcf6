//! Inputs shared by the benchmarks.

use cosetap::analysis::WhiteNoiseExperiment;
use cosetap::estimator::sample_covariance;
use cosetap::sensing::Synthesizer;
use cosetap::{CosetObservationSet, CosetPattern, CovarianceStack};

/// One white-noise acquisition on `pattern`.
pub fn white_noise_set(pattern: &CosetPattern, blocks: usize, tau: usize) -> CosetObservationSet {
    let cfg = WhiteNoiseExperiment { pattern: pattern.clone(), blocks, noise_dbm: 0.0, tau, runs: 1, seed: 1 }.scenario();
    Synthesizer::new(&cfg).expect("valid scenario").acquire(0, false).expect("acquisition").sets.remove(0)
}

pub fn white_noise_stack(pattern: &CosetPattern, blocks: usize, tau: usize) -> CovarianceStack {
    sample_covariance(&white_noise_set(pattern, blocks, tau)).expect("non-empty set")
}
