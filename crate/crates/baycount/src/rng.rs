//! Reproducible random-number substreams.
//!
//! Every stochastic operation in the crate draws from a [`RngStream`], a
//! `(seed, stream_id)` key that materializes into a ChaCha8 generator. Keys
//! are derived, never shared: parallel workers obtain the stream for each
//! work item from the item's index, so results are identical at any worker
//! count, and identical `(seed, stream_id, call sequence)` produces identical
//! draws on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for an independent random-number substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    /// Root stream for a given seed.
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `tag`. Derivation is a pure integer hash, so
    /// substreams can be taken in any order, from any thread.
    #[inline]
    pub fn substream(&self, tag: u64) -> RngStream {
        let mut s = self.stream_id ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let id = splitmix64(&mut s);
        RngStream {
            seed: self.seed,
            stream_id: id,
        }
    }

    /// Materialize the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut s = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}
