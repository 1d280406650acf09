//! Named, splittable random streams.
//!
//! Every stochastic component draws from a ChaCha stream addressed by
//! `(seed, name, index)`. ChaCha is counter based, so two streams with
//! different names or indices never overlap and do not depend on how many
//! numbers any other stream consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, stable across platforms and compiler versions.
fn fnv1a(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A root seed from which independent named streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for a named purpose, e.g. `"bpr/negatives"`.
    pub fn stream(&self, name: &str) -> Rng {
        self.indexed(name, 0)
    }

    /// Stream for the `index`-th instance of a named purpose, e.g. one per epoch.
    pub fn indexed(&self, name: &str, index: u64) -> Rng {
        let mut rng = Rng::seed_from_u64(self.seed ^ fnv1a(name).rotate_left(17));
        rng.set_stream(fnv1a(name) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng
    }

    /// Child seed for a nested component that manages its own streams.
    pub fn child(&self, name: &str) -> SeedStream {
        SeedStream {
            seed: self.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ fnv1a(name),
        }
    }
}
