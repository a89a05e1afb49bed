//! Parallel expressibility estimation.
//!
//! Work is cut into fixed chunks of pairs per repetition. Each chunk draws
//! from its own counter-addressed random streams and yields an integer
//! histogram, so merging is exact and results do not depend on how many
//! threads ran the chunks.

use pqcexpr_core::expressibility::{estimate_from_histograms, histogram_chunk, ExprError, FidelityHistogram};
use pqcexpr_core::{CircuitInstance, ExpressibilityEstimate, SamplingConfig};
use rayon::prelude::*;

/// Pairs per work item.
pub const CHUNK_PAIRS: u64 = 1024;

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build()
}

/// Thread count used when none is requested.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Same result as [`pqcexpr_core::estimate_expressibility`], computed on the
/// current rayon pool.
pub fn estimate_parallel(instance: &CircuitInstance, config: &SamplingConfig) -> Result<ExpressibilityEstimate, ExprError> {
    config.validate()?;
    let pairs = config.n_pairs as u64;
    let tasks: Vec<(usize, u64)> = (0..config.n_repetitions)
        .flat_map(|rep| (0..pairs).step_by(CHUNK_PAIRS as usize).map(move |start| (rep, start)))
        .collect();
    let chunks = tasks
        .into_par_iter()
        .map(|(rep, start)| histogram_chunk(instance, config, rep, start..(start + CHUNK_PAIRS).min(pairs)).map(|h| (rep, h)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut histograms: Vec<FidelityHistogram> =
        (0..config.n_repetitions).map(|_| FidelityHistogram::new(config.n_bins)).collect();
    for (rep, h) in &chunks {
        histograms[*rep].merge(h);
    }
    estimate_from_histograms(instance.n_qubits, config, &histograms)
}
