//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds its own
//! [`Stream`], so concurrent callers never share generator state. The
//! algorithm is fixed so that draws are portable:
//!
//! - state: xoshiro256++ seeded from the `u64` through four SplitMix64 outputs;
//! - uniforms: the top 53 bits of each output scaled by 2⁻⁵³, in `[0, 1)`;
//! - normals: Box–Muller pairs `r·cos(2πu₂), r·sin(2πu₂)` with
//!   `r = √(−2 ln(1 − u₁))`, consumed in order (an odd request drops the sine).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// SplitMix64 finalizer. Bijective on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replicate `r` at sample size `n` of an experiment.
///
/// `mix64(master ^ mix64((n << 32) | r))`: a composition of bijections of the
/// packed 64-bit key, so seeds are pairwise distinct whenever `n, r < 2³²`.
pub fn replicate_seed(master: u64, n: u64, r: u64) -> u64 {
    debug_assert!(n < (1 << 32) && r < (1 << 32));
    mix64(master ^ mix64((n << 32) | (r & 0xffff_ffff)))
}

/// Derives an independent sub-seed for a named purpose within one run.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

#[derive(Clone, Debug)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = self.normal_pair();
        self.spare = Some(b);
        a
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (r * angle.cos(), r * angle.sin())
    }

    /// Fills `out` with standard normals; the pairing does not depend on
    /// earlier calls to [`Stream::normal`].
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        self.spare = None;
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    /// Index drawn with probabilities proportional to `weights` (cumulative scan).
    pub fn categorical(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("non-empty weights");
        let u = self.uniform() * total;
        cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_xoshiro_outputs() {
        let mut s = Stream::new(42);
        let expected = [
            15021278609987233951u64,
            5881210131331364753,
            18149643915985481100,
            12933668939759105464,
        ];
        for e in expected {
            assert_eq!(s.next_u64(), e);
        }
    }

    #[test]
    fn replicate_seeds_distinct_on_a_block() {
        let mut seen = std::collections::HashSet::new();
        for n in [1000u64, 10_000, 100_000, (1 << 32) - 1] {
            for r in 0..5000u64 {
                assert!(seen.insert(replicate_seed(7, n, r)));
            }
        }
    }

    #[test]
    fn mix64_is_invertible_on_samples() {
        // inverse of the SplitMix64 finalizer
        fn unmix(mut z: u64) -> u64 {
            z = (z ^ (z >> 31) ^ (z >> 62)).wrapping_mul(0x3196_42b2_d24d_8ec3);
            z = (z ^ (z >> 27) ^ (z >> 54)).wrapping_mul(0x96de_1b17_3f11_9089);
            z ^ (z >> 30) ^ (z >> 60)
        }
        for k in [0u64, 1, 42, u64::MAX, 0xdead_beef] {
            assert_eq!(unmix(mix64(k)), k);
        }
    }
}
