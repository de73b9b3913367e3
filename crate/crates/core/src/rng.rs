//! Seeded random streams with cheap, reproducible sub-stream derivation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream. The same seed always yields the same
/// sequence, and [`RngStream::derive`] gives independent children keyed by
/// purpose tags so that adding draws in one place never shifts another.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for `tag`; independent of how much `self` has been used.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream::new(splitmix64(
            self.seed ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)),
        ))
    }

    /// Child stream keyed by a purpose and a step counter.
    pub fn derive2(&self, purpose: u64, step: u64) -> RngStream {
        self.derive(purpose).derive(step)
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Purpose tags for derived streams.
pub mod purpose {
    pub const PLAN: u64 = 1;
    pub const EXPLOIT: u64 = 2;
    pub const SCREEN: u64 = 3;
    pub const GLOBAL_IS: u64 = 4;
    pub const ENRICH: u64 = 5;
    pub const PROBE: u64 = 6;
}
