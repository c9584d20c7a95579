//! Seeded randomness shared by the generators and drivers.
//!
//! Every random stream is a `ChaCha8Rng`. Sub-streams are derived from a
//! master seed with a splitmix64 mix so that concurrent workers never share
//! state and results do not depend on scheduling.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixes `seed` and a stream id into an independent 64-bit sub-seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box–Muller standard normal sampler. Caches the second variate of each pair.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeded(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Matrix with i.i.d. standard normal entries, filled column by column.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                out[(r, c)] = self.sample();
            }
        }
        out
    }
}

/// Uniformly random `k`-subset of `0..d`, sorted ascending.
pub fn random_subset<R: Rng>(rng: &mut R, d: usize, k: usize) -> Vec<usize> {
    let mut s = index::sample(rng, d, k).into_vec();
    s.sort_unstable();
    s
}
