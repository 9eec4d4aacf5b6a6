//! Splittable counter-based random stream.
//!
//! Every consumer of randomness in this crate receives an explicit
//! [`RandomStream`]; there is no global or thread-local generator. A stream is
//! a (key, counter) pair fed through the SplitMix64 finalizer, so the i-th
//! draw is a pure function of the key — two streams with equal state produce
//! bit-identical sequences, and [`RandomStream::split`] derives statistically
//! independent child streams for parallel or per-component use.

use std::f64::consts::PI;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SPLIT_SALT: u64 = 0xb542_9c35_9f1a_44d1;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic, splittable stream of pseudo-random numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        // Decorrelate trivially related seeds (0, 1, 2, ...).
        Self {
            key: mix64(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// Next raw 64-bit draw.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection sampling over the top of the range keeps the draw unbiased.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal draw via Box-Muller. Consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        // Guard u1 away from zero so ln() stays finite.
        let u1 = (self.next_u64() >> 11).max(1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Derives an independent child stream and advances this one.
    pub fn split(&mut self) -> RandomStream {
        let c = self.next_u64();
        RandomStream {
            key: mix64(self.key ^ c ^ SPLIT_SALT),
            counter: 0,
        }
    }

    /// Pure keyed derivation: the same (stream, tag) always yields the same
    /// child, without mutating `self`. Used to hand out per-episode streams
    /// that are independent of evaluation order.
    pub fn derive(&self, tag: u64) -> RandomStream {
        RandomStream {
            key: mix64(self.key ^ mix64(tag ^ SPLIT_SALT)),
            counter: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_state_equal_sequence() {
        let mut a = RandomStream::new(7);
        let mut b = a.clone();
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_streams_diverge() {
        let mut root = RandomStream::new(1);
        let mut a = root.split();
        let mut b = root.split();
        let equal = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn derive_is_pure() {
        let root = RandomStream::new(3);
        let mut a = root.derive(42);
        let mut b = root.derive(42);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = root.derive(43);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_in_range() {
        let mut rng = RandomStream::new(11);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn uniform_usize_covers_all_values() {
        let mut rng = RandomStream::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.uniform_usize(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn normal_moments() {
        let mut rng = RandomStream::new(9);
        let n = 200_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = rng.normal();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
