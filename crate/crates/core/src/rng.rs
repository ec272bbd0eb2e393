//! Reproducible random streams.
//!
//! Every Monte Carlo task draws from its own ChaCha stream, addressed by a
//! master seed, a domain tag (which experiment) and a task index. Results
//! therefore do not depend on how tasks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A master seed together with a domain tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    seed: u64,
    domain: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, domain: 0 }
    }

    /// Derive a key for a sub-experiment. Distinct tags give unrelated streams.
    pub fn child(self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            domain: splitmix(self.domain ^ splitmix(tag.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator for task `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        let mut state = self.seed ^ splitmix(self.domain);
        for chunk in bytes.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(index);
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
