//! Counter-based random streams.
//!
//! Every random number in the crate comes from an [`RngStream`] addressed by
//! a `(seed, stream)` pair. The generator is a keyed SplitMix64 counter:
//!
//! ```text
//! mix64(z)  = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!             z ^= z >> 27; z *= 0x94D049BB133111EB;
//!             z ^ (z >> 31)
//! key       = mix64(mix64(seed) ^ (stream * 0xD1342543DE82EF95 + 0x632BE59BD9B4E019))
//! output_i  = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)      (wrapping, i = 0, 1, ...)
//! uniform_i = (output_i >> 11) * 2^-53
//! ```
//!
//! Only wrapping 64-bit integer arithmetic is involved, so sequences are
//! bit-identical on every platform. Monte Carlo drivers give each sample its
//! own stream (see [`RngStream::for_sample`]); which worker evaluates a sample
//! therefore has no influence on its value.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD134_2543_DE82_EF95;
const STREAM_ADD: u64 = 0x632B_E59B_D9B4_E019;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags that keep the streams of unrelated Monte Carlo loops apart
/// even when they share a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Hitting = 1,
    Return = 2,
    ShortReturn = 3,
    Kac = 4,
    Decorrelation = 5,
    Ergodic = 6,
    Recurrence = 7,
    Anticoncentration = 8,
    Uniformity = 9,
    Census = 10,
    Delayed = 11,
    Synthetic = 12,
    Sandwich = 13,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let key = mix64(mix64(seed) ^ stream.wrapping_mul(STREAM_MUL).wrapping_add(STREAM_ADD));
        Self {
            seed,
            stream,
            key,
            counter: 0,
        }
    }

    /// Stream for sample `index` of a Monte Carlo loop tagged `domain`.
    pub fn for_sample(seed: u64, domain: Domain, index: u64) -> Self {
        Self::new(seed, ((domain as u64) << 48) ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`, safe to pass to `ln`.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Lemire's multiply-shift; the bias is < n / 2^64.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

impl rand_core::RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (RngStream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        RngStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
