//! Inputs shared by the benchmarks.

use ozaki::{gen_matrix, Matrix};

/// Uniform (1, 10) entries, the distribution of the accuracy experiments.
pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    gen_matrix(rows, cols, seed, 1.0, 10.0).expect("valid interval")
}

/// Signed entries `u * 2^e` with `e` spread over `[-30, 30]`.
pub fn spread(rows: usize, cols: usize, seed: u64) -> Matrix {
    let u = gen_matrix(rows, cols, seed, -1.0, 1.0).expect("valid interval");
    let e = gen_matrix(rows, cols, seed ^ 0x5eed, -30.5, 30.5).expect("valid interval");
    Matrix::from_fn(rows, cols, |i, j| {
        u[(i, j)] * 2f64.powi(e[(i, j)].round() as i32)
    })
}

/// Pairs of normal doubles with biased exponents in `[300, 1700]`.
pub fn normal_pairs(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let m = gen_matrix(n, 4, seed, 0.0, 1.0).expect("valid interval");
    let word = |u: f64, e: f64| {
        let exp = 300 + (e * 1400.0) as u64;
        f64::from_bits(u.to_bits() & ((1 << 52) - 1) | exp << 52)
    };
    (0..n)
        .map(|i| (word(m[(i, 0)], m[(i, 1)]), -word(m[(i, 2)], m[(i, 3)])))
        .collect()
}
