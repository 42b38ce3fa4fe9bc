//! Counter-based randomness: the uniform used at `(step, site)` is a pure
//! function of `(key, step, site)`.
//!
//! ChaCha is itself a counter-mode generator, so we key it once per policy,
//! select the stream by step index and seek to word `2·site` (one `u64` per
//! site). Any chunking of the sites reproduces the same numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scale for mapping the top 53 bits of a `u64` to `(0, 1]`.
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct RngPolicy {
    seed: u64,
    fork: Option<u64>,
    base: ChaCha8Rng,
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, None)
    }

    fn keyed(seed: u64, fork: Option<u64>) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        if let Some(f) = fork {
            key[8..16].copy_from_slice(&f.to_le_bytes());
            key[16] = 1;
        }
        key[24..].copy_from_slice(b"pca-rng\x01");
        Self {
            seed,
            fork,
            base: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent policy for replica `index` (e.g. one coupling trial).
    pub fn fork(&self, index: u64) -> Self {
        assert!(self.fork.is_none(), "forks of forks are not supported");
        Self::keyed(self.seed, Some(index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream positioned at the uniform for `(step, first_site)`; subsequent
    /// draws give the uniforms of `first_site + 1`, `first_site + 2`, ...
    pub fn site_stream(&self, step: u64, first_site: usize) -> SiteStream {
        let mut rng = self.base.clone();
        rng.set_stream(step);
        rng.set_word_pos(2 * first_site as u128);
        SiteStream { rng }
    }

    /// The uniform in `(0, 1]` attached to `(step, site)`.
    pub fn uniform(&self, step: u64, site: usize) -> f64 {
        self.site_stream(step, site).next_uniform()
    }
}

pub struct SiteStream {
    rng: ChaCha8Rng,
}

impl SiteStream {
    /// Next uniform in `(0, 1]`; `u <= p` then has probability exactly `p`
    /// on the 2^-53 grid, so `p = 0` never fires and `p = 1` always does.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * UNIT
    }

    /// Unbiased index in `0..n`, consuming a variable number of words.
    pub fn next_index(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..n)
    }
}
