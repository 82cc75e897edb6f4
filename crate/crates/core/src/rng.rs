//! Deterministic, splittable random source.
//!
//! Backed by ChaCha20 (`rand_chacha`): the 64-bit seed expands into the key
//! and a 64-bit stream id selects an independent keystream, so draws are a
//! pure function of `(seed, stream, position)` on every platform.
//! Substreams are addressed by a path of labels; the stream id of a child is
//! `splitmix64(parent_stream ^ splitmix64(label + 1))`. Consumers take a
//! dedicated substream per logical object (per layer, per Haar factor, per
//! Monte-Carlo sample) so that changing how many objects are drawn never
//! shifts the values of the others.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Name recorded in output headers.
pub const PRNG_NAME: &str = "ChaCha20 (rand_chacha 0.9), splitmix64 stream derivation";

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator for the child labelled `label`. Independent of how
    /// much of `self` has been consumed.
    pub fn substream(&self, label: u64) -> SeededRng {
        let child = splitmix64(self.stream ^ splitmix64(label.wrapping_add(1)));
        Self::with_stream(self.seed, child)
    }
}

impl RngCore for SeededRng {
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
