//! Seeded Laplace noise.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform draw from the open interval (0, 1).
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Inverse CDF of the unit-magnitude Laplace distribution.
pub fn standard_laplace(u: f64) -> f64 {
    let d = u - 0.5;
    -d.signum() * (1.0 - 2.0 * d.abs()).ln()
}

/// Laplace sample with density `exp(-|x| / magnitude) / (2 magnitude)`.
pub fn laplace_sample(magnitude: f64, rng: &mut impl RngCore) -> f64 {
    assert!(magnitude > 0.0 && magnitude.is_finite(), "Laplace magnitude must be positive, got {magnitude}");
    magnitude * standard_laplace(open_unit(rng))
}

/// Source of per-coefficient noise. Each call consumes the next position of the stream.
pub trait NoiseSampler {
    fn sample(&mut self, magnitude: f64) -> f64;
}

#[derive(Debug, Clone)]
pub struct LaplaceSampler {
    rng: ChaCha8Rng,
}

impl LaplaceSampler {
    pub fn new(seed: u64) -> Self {
        LaplaceSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NoiseSampler for LaplaceSampler {
    fn sample(&mut self, magnitude: f64) -> f64 {
        laplace_sample(magnitude, &mut self.rng)
    }
}

/// Returns zero for every draw. Test hook for noiseless round trips.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNoise;

impl NoiseSampler for NoNoise {
    fn sample(&mut self, magnitude: f64) -> f64 {
        assert!(magnitude > 0.0, "Laplace magnitude must be positive, got {magnitude}");
        0.0
    }
}

/// Deterministic 64-bit mixing (splitmix64) for deriving independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
