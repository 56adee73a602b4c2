//! Counter-based pseudo-random generator.
//!
//! The NDA controllers and their host-side replicas must draw identical
//! random sequences without exchanging state, so the generator is a pure
//! function of (seed, counter). State is 8 bytes (u32 seed + u32 counter),
//! small enough to live in the replica register budget. The same generator
//! drives traffic synthesis and dataset generation to keep whole runs
//! reproducible from a single root seed.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream generator: output k is `f(seed, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u32,
    counter: u32,
}

impl CounterRng {
    pub fn new(seed: u32) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Derives an independent stream seed from a parent seed and a stream id.
    pub fn derive(seed: u64, stream: u64) -> u32 {
        splitmix64(seed ^ splitmix64(stream.wrapping_add(GOLDEN))) as u32
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    /// Test hook: skips draws to model a corrupted replica.
    pub fn skip(&mut self, n: u32) {
        self.counter = self.counter.wrapping_add(n);
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter as u64;
        self.counter = self.counter.wrapping_add(1);
        let base = splitmix64((self.seed as u64) << 1 | 1);
        splitmix64(base ^ c.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    pub fn gen_range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Multiply-shift keeps the draw count at one per call.
        ((self.next_u64() >> 32).wrapping_mul(n) >> 32) as u64
    }

    pub fn gen_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller. Consumes two draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = (self.next_f64()).max(1e-300);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Index drawn from nonnegative weights. Weights need not be normalized.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0;
        }
        let mut x = self.next_f64() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = CounterRng::new(7);
        let mut b = CounterRng::new(7);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn counter_determines_output() {
        let mut a = CounterRng::new(3);
        a.next_u64();
        a.next_u64();
        let mut b = CounterRng::new(3);
        b.skip(2);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn range_bounds() {
        let mut r = CounterRng::new(11);
        for _ in 0..1000 {
            let v = r.gen_range(13);
            assert!(v < 13);
        }
    }
}
