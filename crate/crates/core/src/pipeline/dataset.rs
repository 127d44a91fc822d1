use crate::error::Result;
use crate::rng::SeededRng;
use crate::sim::{sample_sequence, Sequence, SimConfig};

/// Seed of sequence `index` in a dataset generated with `seed`.
pub fn sequence_seed(seed: u64, index: usize) -> u64 {
    SeededRng::new(seed).split(index as u64).next_u64()
}

/// `count` sequences; sequence `i` depends only on `seed` and `i`.
pub fn generate(sim: &SimConfig, count: usize, seed: u64) -> Result<Vec<Sequence>> {
    (0..count)
        .map(|i| sample_sequence(sim, &mut SeededRng::new(sequence_seed(seed, i))))
        .collect()
}
