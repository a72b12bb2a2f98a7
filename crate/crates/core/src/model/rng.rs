//! Seeded generator used for fixtures (random networks and inputs).
//!
//! The stream is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`), a
//! counter-based generator. All derived draws below are defined here on top of
//! raw `next_u64` words rather than through `rand`'s distribution types, so the
//! same seed yields the same fixture on every platform and crate version.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct FixtureRng {
    inner: ChaCha8Rng,
}

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        FixtureRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 24 bits, exactly representable as `f32`.
    pub fn unit_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u32 << 24) as f32
    }

    /// Uniform in `[0, 1)` with 53 bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[-1, 1)`.
    pub fn symmetric_f32(&mut self) -> f32 {
        2.0 * self.unit_f32() - 1.0
    }

    /// Integer in `lo..=hi` by modulo reduction (the bias is irrelevant for
    /// fixtures and keeps the mapping trivially portable).
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as usize
    }

    /// True with probability `num / den`.
    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.next_u64() % den < num
    }

    pub fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.range(0, items.len() - 1)]
    }
}
