//! Counter-based normal streams.
//!
//! A stream is addressed by `(master seed, replicate index, role)`. The master
//! seed keys a ChaCha8 generator and `(replicate, role)` selects its 64-bit
//! stream id, so stream `m` produces the same numbers no matter which thread
//! draws it or in which order. Normals come from the inverse normal CDF applied
//! to open-interval uniforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Which process a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamRole {
    Process = 0,
    Brownian = 1,
    Auxiliary = 2,
}

const ROLE_BITS: u32 = 2;

/// Stream id for a replicate and role; injective for replicates below `2^62`.
pub fn stream_id(replicate: u64, role: StreamRole) -> u64 {
    (replicate << ROLE_BITS) | role as u64
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent master seed, e.g. for repeated experiment runs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(master_seed: u64, replicate: u64, role: StreamRole) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id(replicate, role));
        Self { rng }
    }

    /// Uniform on the open interval `(0, 1)`, on the lattice `(k + ½) 2^{-53}`.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(self.next_uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}
