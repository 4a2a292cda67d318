//! Seeded random streams.
//!
//! Every trial owns a family of ChaCha8 streams addressed by
//! `(master seed, trial index, purpose)`. The stream id encodes the trial and
//! the purpose, so trial `i` draws the same numbers no matter how many other
//! trials run alongside it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Trace = 0,
    Noise = 1,
    Init = 2,
    Graph = 3,
    Data = 4,
}

const PURPOSES: u64 = 8;

/// Stream for `(master, trial, purpose)`.
pub fn derive_rng(master: u64, trial: u64, purpose: Purpose) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial * PURPOSES + purpose as u64);
    rng
}

/// 64-bit seed for `(master, trial, purpose)`, used where an API takes a
/// plain seed (event traces).
pub fn derive_seed(master: u64, trial: u64, purpose: Purpose) -> u64 {
    derive_rng(master, trial, purpose).next_u64()
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the open interval (0, 1). Consumes exactly one `u64`.
#[inline]
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with independent standard normals by Box–Muller.
///
/// Consumes exactly `2·⌈len/2⌉` `u64` draws, independent of the values drawn.
pub fn fill_standard_normal(rng: &mut impl RngCore, out: &mut [f64]) {
    let mut chunks = out.chunks_mut(2);
    for pair in &mut chunks {
        let u1 = open_unit(rng);
        let u2 = open_unit(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        pair[0] = r * c;
        if pair.len() > 1 {
            pair[1] = r * s;
        }
    }
}

/// Index in `0..n` by multiply-shift. Consumes exactly one `u64`.
#[inline]
pub fn index(rng: &mut impl RngCore, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Standard normal draw, used for data generation where draw counts do not
/// matter.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let mut v = [0.0];
    fill_standard_normal(rng, &mut v);
    v[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_are_distinct_and_stable() {
        let a = derive_seed(7, 0, Purpose::Trace);
        let b = derive_seed(7, 1, Purpose::Trace);
        let c = derive_seed(7, 0, Purpose::Noise);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, 0, Purpose::Trace));
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut rng = rng_from_seed(1);
        let mut buf = vec![0.0; 200_001];
        fill_standard_normal(&mut rng, &mut buf);
        let n = buf.len() as f64;
        let mean = buf.iter().sum::<f64>() / n;
        let var = buf.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn open_unit_stays_inside() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10_000 {
            let u = open_unit(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
