//! Deterministic test matrices.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Stream key for `(seed, rows, cols)`.
fn stream(seed: u64, rows: usize, cols: usize) -> SplitMix64 {
    let mut mix = SplitMix64::seed_from_u64(seed);
    let key = mix.next_u64() ^ (rows as u64).rotate_left(32) ^ cols as u64;
    SplitMix64::seed_from_u64(key)
}

/// 53-bit uniform in `[0, 1)`.
fn unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A `rows x cols` matrix of uniform values in the open interval `(lo, hi)`.
/// The same arguments give the same bits on every platform.
pub fn gen_matrix(rows: usize, cols: usize, seed: u64, lo: f64, hi: f64) -> Result<Matrix> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!("empty interval ({lo}, {hi})")));
    }
    let mut rng = stream(seed, rows, cols);
    let span = hi - lo;
    let data = (0..rows * cols)
        .map(|_| loop {
            let v = lo + unit(&mut rng) * span;
            if lo < v && v < hi {
                break v;
            }
        })
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

/// `A (m x k)` and `B (k x n)` drawn from independent streams.
pub fn gen_operands(
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
    lo: f64,
    hi: f64,
) -> Result<(Matrix, Matrix)> {
    let a = gen_matrix(m, k, seed, lo, hi)?;
    let b = gen_matrix(k, n, seed ^ 0x9e37_79b9_7f4a_7c15, lo, hi)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = gen_matrix(2, 2, 42, 1.0, 10.0).unwrap();
        let b = gen_matrix(2, 2, 42, 1.0, 10.0).unwrap();
        assert!(a.bitwise_eq(&b));
        assert!(!a.bitwise_eq(&gen_matrix(2, 2, 43, 1.0, 10.0).unwrap()));
    }

    #[test]
    fn range_and_mean() {
        let m = gen_matrix(64, 64, 7, 1.0, 10.0).unwrap();
        assert!(m.as_slice().iter().all(|&v| 1.0 < v && v < 10.0));
        let mean = m.as_slice().iter().sum::<f64>() / m.as_slice().len() as f64;
        assert!(5.0 < mean && mean < 6.0, "{mean}");
    }

    #[test]
    fn operands_differ() {
        let (a, b) = gen_operands(8, 8, 8, 1, 1.0, 10.0).unwrap();
        assert!(!a.bitwise_eq(&b));
        assert!(gen_matrix(1, 1, 0, 2.0, 2.0).is_err());
    }
}
