//! Seed derivation and normal deviates.
//!
//! Every random decision in the pipeline draws from a ChaCha8 stream whose
//! seed is derived from the master seed through labeled substreams, so two
//! runs with the same master seed make identical draws regardless of the
//! order in which iterations or approaches are executed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Child seed for the `index`-th draw of a parent stream.
pub fn derive(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Child seed for a named substream.
pub fn substream(parent: u64, label: &str) -> u64 {
    derive(parent, label_hash(label))
}

/// `seed_i = mix64(master ^ mix64((i + 1) * golden_gamma))`.
pub fn iteration_seed(master: u64, iteration: usize) -> u64 {
    derive(master, iteration as u64)
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box–Muller pair of independent standard normal deviates.
pub fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // 1 - U lies in (0, 1], keeping the log finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let radius = libm::sqrt(-2.0 * libm::log(u1));
    let theta = core::f64::consts::TAU * u2;
    (radius * libm::cos(theta), radius * libm::sin(theta))
}

/// Fills `out` with standard normal deviates.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0;
    }
}

/// Fisher–Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn substreams_differ_by_label() {
        assert_ne!(substream(7, "split"), substream(7, "smote"));
        assert_eq!(substream(7, "split"), substream(7, "split"));
    }

    #[test]
    fn iteration_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..1000).map(|i| iteration_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut rng = rng_from(3);
        let mut z = vec![0.0; 200_001];
        fill_standard_normal(&mut rng, &mut z);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
