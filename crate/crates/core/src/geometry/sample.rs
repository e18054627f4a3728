//! Deterministic sample sets: a shifted Halton sequence over the coordinate
//! box and seeded random quasi-velocities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// `count` points of the Halton sequence over `ranges`, with a
/// Cranley–Patterson rotation drawn from `seed`.
pub fn halton_points(ranges: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(
        ranges.len() <= PRIMES.len(),
        "too many coordinates for Halton sampling"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = ranges.iter().map(|_| rng.gen::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            ranges
                .iter()
                .enumerate()
                .map(|(d, &(lo, hi))| {
                    let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

/// `count` random vectors with entries uniform in `[-1, 1]`.
pub fn random_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_stays_in_box_and_is_deterministic() {
        let r = [(-1.0, 2.0), (0.0, 0.5), (-3.0, -2.0)];
        let a = halton_points(&r, 64, 7);
        assert_eq!(a, halton_points(&r, 64, 7));
        assert_ne!(a, halton_points(&r, 64, 8));
        for p in &a {
            for (x, (lo, hi)) in p.iter().zip(r) {
                assert!(*x >= lo && *x <= hi);
            }
        }
    }

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
    }
}
