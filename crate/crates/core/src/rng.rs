//! Counter-based random streams.
//!
//! Every stochastic update draws from a stream keyed by `(seed, chain, sweep, block)`,
//! so a run is bit-reproducible no matter how block updates are scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Block slot reserved for scheme-level draws (e.g. the random scheme's picks).
pub const SCHEDULER_BLOCK: u64 = (1 << 28) - 1;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub seed: u64,
    pub chain: u64,
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, chain: 0 }
    }

    pub fn with_chain(self, chain: u64) -> Self {
        Self { chain, ..self }
    }

    /// Derives an independent seed, e.g. for a grid cell of an experiment.
    pub fn derive(&self, salt: u64) -> StreamSeed {
        let mut s = self.seed ^ salt.rotate_left(17) ^ 0xD1B5_4A32_D192_ED03;
        StreamSeed { seed: splitmix64(&mut s) ^ splitmix64(&mut s).rotate_left(32), chain: self.chain }
    }

    /// The stream for one `(sweep, block)` pair. `block` must be below 2^28.
    pub fn stream(&self, sweep: u64, block: u64) -> ChaCha8Rng {
        debug_assert!(block <= SCHEDULER_BLOCK);
        let mut state = self.seed ^ self.chain.wrapping_mul(0xA24B_AED4_963E_E407);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(sweep);
        rng.set_word_pos((block as u128) << 40);
        rng
    }
}
