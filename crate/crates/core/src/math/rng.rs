use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math::Scalar;

/// Lower clamp for the uniform variate feeding `-ln(-ln u)`.
pub const GUMBEL_U_MIN: f64 = 1e-20;
/// Upper clamp for the uniform variate feeding `-ln(-ln u)`.
pub const GUMBEL_U_MAX: f64 = 1.0 - 1e-16;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded ChaCha stream. Substreams are derived from a key path so that
/// independent workers (or batch elements) draw reproducible, disjoint
/// sequences without sharing state.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh handle keyed by `(seed, path...)`; independent of how much of
    /// the parent stream has been consumed.
    pub fn derive(&self, path: &[u64]) -> RngHandle {
        let mut h = splitmix64(self.seed);
        for &p in path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
        }
        RngHandle::new(h)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `len` i.i.d. standard Gumbel samples `-ln(-ln u)`.
pub fn gumbel_noise<T: Scalar>(len: usize, rng: &mut RngHandle) -> Vec<T> {
    (0..len)
        .map(|_| {
            let u = rng.uniform().clamp(GUMBEL_U_MIN, GUMBEL_U_MAX);
            T::lit(-(-u.ln()).ln())
        })
        .collect()
}

/// `len` i.i.d. zero-mean normal samples with standard deviation `sigma`.
pub fn gaussian_noise<T: Scalar>(len: usize, sigma: f64, rng: &mut RngHandle) -> Vec<T> {
    (0..len).map(|_| T::lit(sigma * rng.standard_normal())).collect()
}
