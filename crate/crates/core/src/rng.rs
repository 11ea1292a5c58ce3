//! Deterministic random numbers for synthetic problems.
//!
//! All randomness goes through xoshiro256++ seeded from a 64-bit integer via
//! SplitMix64 (`seed_from_u64`). Gaussian samples use the ziggurat sampler
//! of `rand_distr`. The stream is stable for a fixed crate version; it does
//! not reproduce MATLAB's `rng`.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::dense::DenseMat;

#[derive(Clone, Debug)]
pub struct SolverRng(Xoshiro256PlusPlus);

impl SolverRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn gaussian(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// `rows × cols` matrix of independent standard normal entries, filled
/// column by column.
pub fn gaussian_matrix(rng: &mut SolverRng, rows: usize, cols: usize) -> DenseMat {
    DenseMat::from_fn(rows, cols, |_, _| rng.gaussian())
}

pub fn gaussian_vector(rng: &mut SolverRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gaussian()).collect()
}
