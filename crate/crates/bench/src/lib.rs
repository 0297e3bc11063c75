//! Shared fixtures for the pipeline benchmarks.

use sqri_core::sim::SimModel;
use sqri_core::Dataset;

/// One masked linear-model replicate at the default simulation size.
pub fn masked_replicate(n: usize, seed: u64) -> Dataset {
    let (_, masked) = sqri_core::sim::gen_replicate(SimModel::Linear, n, seed).unwrap();
    masked
}

/// A complete linear-model replicate.
pub fn complete_replicate(n: usize, seed: u64) -> Dataset {
    let (complete, _) = sqri_core::sim::gen_replicate(SimModel::Linear, n, seed).unwrap();
    complete
}
