//! Seeded pseudo-random numbers with a stable sequence.
//!
//! The search and sampling layers promise byte-identical output for a given
//! seed, so we carry our own small generator (SplitMix64) instead of
//! depending on an external crate whose stream might change between
//! versions.

use alloc::vec::Vec;

/// SplitMix64 generator. Statistically solid for sampling and shuffling,
/// and trivially reproducible.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform float in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it exactly
    /// uniform. Panics if n == 0.
    pub fn gen_range(&mut self, n: usize) -> usize {
        assert!(n > 0, "gen_range requires n > 0");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.gen_range(i + 1);
            items.swap(i, j);
        }
    }

    /// Draw `take` distinct indices from 0..len, uniformly without
    /// replacement, via a partial Fisher-Yates pass. If take >= len the
    /// full index set is returned (in shuffled order).
    pub fn sample_indices(&mut self, len: usize, take: usize) -> Vec<usize> {
        let take = take.min(len);
        let mut pool: Vec<usize> = (0..len).collect();
        for i in 0..take {
            let j = i + self.gen_range(len - i);
            pool.swap(i, j);
        }
        pool.truncate(take);
        pool
    }
}
