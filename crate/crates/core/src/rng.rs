//! Reproducible random streams.
//!
//! Every replication owns one [`RandomStream`]. Streams are ChaCha8 generators
//! keyed by a base seed and addressed by a 64-bit stream index, so the draws of
//! replication `i` depend only on `(seed, i)` and never on scheduling.

use rand::distr::OpenClosed01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Stream for replication `index` within an independent lane of `base_seed`.
    ///
    /// Lanes let one plan drive several unrelated samplers (for instance the
    /// forward and limit sides of a two-sample comparison) without overlap.
    pub fn for_lane(base_seed: u64, lane: u64, index: u64) -> Self {
        Self::new(derive_seed(base_seed, lane), index)
    }

    /// Uniform draw on (0, 1].
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.sample(OpenClosed01)
    }

    /// Standard exponential draw, `-ln U` with `U` on (0, 1].
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        -self.uniform().ln()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() <= p
    }
}

impl RngCore for RandomStream {
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

/// SplitMix64 finalizer applied to `base ^ golden * (lane + 1)`.
pub fn derive_seed(base: u64, lane: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(lane.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
