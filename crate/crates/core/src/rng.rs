//! Named, splittable seeded random streams.
//!
//! Every stochastic operation in the crate takes an explicit generator. A
//! [`SeedStream`] derives independent child generators from a root seed and a
//! path of labels, so that jobs can run in any order (or in parallel) and still
//! reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"edq-seed-stream");
        h.update(seed.to_le_bytes());
        SeedStream {
            key: h.finalize().into(),
        }
    }

    /// Child stream identified by `label`.
    pub fn child(&self, label: &str) -> SeedStream {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        SeedStream {
            key: h.finalize().into(),
        }
    }

    /// Child stream identified by an index (iteration, patient id, ...).
    pub fn index(&self, i: u64) -> SeedStream {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(b"#");
        h.update(i.to_le_bytes());
        SeedStream {
            key: h.finalize().into(),
        }
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key)
    }
}
