//! Seeded deterministic randomness with derivable sub-streams.
//!
//! Every stochastic operation in the engine draws from an [`EvoRng`]. A
//! stream is fully determined by its seed, and independent sub-streams can
//! be derived from `(label, index)` keys, so parallel work (one evaluation
//! or mutation per individual) stays reproducible regardless of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic random stream. Same seed, same draws.
#[derive(Debug, Clone)]
pub struct EvoRng {
    rng: ChaCha8Rng,
    seed: u64,
}

// splitmix64; stable mixing for sub-stream key derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, fixed offset/prime so streams never depend on std hasher state.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EvoRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Seed this stream was created from (sub-streams derive from it, not
    /// from the stream position).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent sub-stream keyed by `(label, index)`.
    pub fn substream(&self, label: &str, index: u64) -> Self {
        let key = mix(self.seed ^ hash_label(label)).wrapping_add(mix(index));
        Self::from_seed(mix(key))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn u(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw on `[-bound, bound]`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        bound * (2.0 * self.u() - 1.0)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.random_range(0..n)
    }

    /// Sample `k` distinct indices from `[0, n)`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        // Partial Fisher-Yates over an index vector; O(n) but n is small
        // (edges of one module) and the draw count stays k.
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
            out.push(pool[i]);
        }
        out
    }

    /// Sample an index with probability proportional to `weights`.
    /// Weights must be non-negative with a positive sum.
    pub fn weighted_index(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut target = self.u() * total;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }
}
