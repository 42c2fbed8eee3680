//! Shared inputs for the criterion benches.

use distclust::{estimate_gaussian, generate_benchmark, GaussianModel, SynthParams, SyntheticBenchmark};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The standard synthetic benchmark (200 objects of 30 samples).
pub fn benchmark(d: usize, k: usize) -> SyntheticBenchmark {
    generate_benchmark(&SynthParams::new(d, k), 7).expect("valid parameters")
}

/// One estimated Gaussian per object of [`benchmark`].
pub fn models(d: usize, k: usize) -> Vec<GaussianModel> {
    benchmark(d, k)
        .groups
        .iter()
        .map(|g| estimate_gaussian(g, 1e-8).expect("well-conditioned samples"))
        .collect()
}

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}
