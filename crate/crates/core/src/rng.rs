//! SplitMix64 stream used for reproducible fixture generation.
//!
//! Fixture weights and synthetic image embeddings must be bit-identical
//! across platforms and implementations, so the generator is pinned here
//! rather than delegated to a random-number crate whose stream may change
//! between versions. The algorithm is the reference SplitMix64 finalizer.

/// Deterministic 64-bit generator with a fixed, documented stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` built from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / 9_007_199_254_740_992.0
    }

    /// Uniform draw in `[-scale, scale]`, rounded to f32.
    ///
    /// This is the exact recipe the weights container format documents:
    /// `(2u - 1) * scale` in f64, then a single rounding to f32.
    pub fn next_symmetric_f32(&mut self, scale: f64) -> f32 {
        ((2.0 * self.next_unit() - 1.0) * scale) as f32
    }

    /// Uniform draw in `[-scale, scale]` kept in f64 (synthetic embeddings).
    pub fn next_symmetric(&mut self, scale: f64) -> f64 {
        (2.0 * self.next_unit() - 1.0) * scale
    }
}
