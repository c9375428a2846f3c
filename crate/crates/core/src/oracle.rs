//! Reference products and error metrics.
//!
//! [`ref_gemm`] rounds each exact dot product to FP64 once. [`naive_gemm_fp64`]
//! is the plain triple loop every emulated result is judged against.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{decompose, ExactAccumulator};
use crate::matrix::Matrix;

fn check_product(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn check_finite(m: &Matrix) -> Result<()> {
    match m.as_slice().iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(Error::NonFinite(v)),
        None => Ok(()),
    }
}

/// Correctly rounded `A * B`.
pub fn ref_gemm(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_product(a, b)?;
    check_finite(a)?;
    check_finite(b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let decode = |m: &Matrix| -> Vec<(bool, u64, i32)> {
        m.as_slice().iter().map(|&v| decompose(v)).collect()
    };
    let da = decode(a);
    let dbt = decode(&b.transpose());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let arow = &da[i * k..(i + 1) * k];
            let mut acc = ExactAccumulator::new();
            (0..n)
                .map(|j| {
                    acc.clear();
                    for (&(na, ma, ea), &(nb, mb, eb)) in arow.iter().zip(&dbt[j * k..(j + 1) * k])
                    {
                        acc.add_scaled(na ^ nb, ma as u128 * mb as u128, ea + eb);
                    }
                    acc.to_f64()
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Matrix::from_vec(m, n, rows.concat()))
}

/// `C += A * B` with ascending-k FP64 accumulation per element. The loop
/// runs over `j` innermost so it vectorizes while each element still sees
/// its terms in index order.
fn naive_accumulate(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    let n = b.cols();
    c.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, crow)| {
            for (kk, &x) in a.row(i).iter().enumerate() {
                for (cj, &y) in crow.iter_mut().zip(b.row(kk)) {
                    *cj += x * y;
                }
            }
        });
}

/// Triple-loop FP64 product.
pub fn naive_gemm_fp64(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_product(a, b)?;
    let mut c = Matrix::zeros(a.rows(), b.cols());
    if b.cols() > 0 {
        naive_accumulate(a, b, &mut c);
    }
    Ok(c)
}

/// Triple loop run per inner block of width `k_block` (0 means one block),
/// with block products added into `C` in ascending block order.
pub fn naive_gemm_fp64_blocked(a: &Matrix, b: &Matrix, k_block: usize) -> Result<Matrix> {
    check_product(a, b)?;
    let k = a.cols();
    if k_block == 0 || k_block >= k {
        return naive_gemm_fp64(a, b);
    }
    let mut c = Matrix::zeros(a.rows(), b.cols());
    let mut start = 0;
    while start < k {
        let end = (start + k_block).min(k);
        let part = naive_gemm_fp64(&a.column_block(start, end), &b.row_block(start, end))?;
        for (x, &y) in c.as_mut_slice().iter_mut().zip(part.as_slice()) {
            *x += y;
        }
        start = end;
    }
    Ok(c)
}

fn check_same_shape(c: &Matrix, cref: &Matrix) -> Result<()> {
    if c.shape() != cref.shape() {
        return Err(Error::Dimension(format!(
            "{:?} compared with {:?}",
            c.shape(),
            cref.shape()
        )));
    }
    Ok(())
}

/// `max |C - Cref| / |Cref|` over all entries.
pub fn max_rel_error(c: &Matrix, cref: &Matrix) -> Result<f64> {
    check_same_shape(c, cref)?;
    let cols = cref.cols();
    let mut worst = 0.0f64;
    for (idx, (&x, &r)) in c.as_slice().iter().zip(cref.as_slice()).enumerate() {
        if r == 0.0 {
            return Err(Error::DivisionByZero {
                row: idx / cols,
                col: idx % cols,
            });
        }
        worst = worst.max(((x - r) / r).abs());
    }
    Ok(worst)
}

/// `max |C - Cref|` over all entries.
pub fn max_abs_error(c: &Matrix, cref: &Matrix) -> Result<f64> {
    check_same_shape(c, cref)?;
    Ok(c.as_slice()
        .iter()
        .zip(cref.as_slice())
        .map(|(&x, &r)| (x - r).abs())
        .fold(0.0, f64::max))
}

/// Errors of a candidate and of the naive FP64 baseline against [`ref_gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub err_oz: f64,
    pub err_naive: f64,
}

impl AccuracyReport {
    /// True when the candidate is at least as accurate as the baseline.
    pub fn dominates(&self) -> bool {
        self.err_oz <= self.err_naive
    }
}

/// Measures `candidate` and the naive product of `a * b` against the
/// correctly rounded product. `k_block` selects the blocked baseline.
pub fn accuracy_report(
    a: &Matrix,
    b: &Matrix,
    candidate: &Matrix,
    k_block: usize,
) -> Result<AccuracyReport> {
    let cref = ref_gemm(a, b)?;
    let naive = naive_gemm_fp64_blocked(a, b, k_block)?;
    Ok(AccuracyReport {
        err_oz: max_rel_error(candidate, &cref)?,
        err_naive: max_rel_error(&naive, &cref)?,
    })
}
