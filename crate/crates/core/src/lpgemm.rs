//! Simulated Tensor-Core GEMM: operands in a low-precision format, products
//! formed exactly, accumulation rounded to the accumulation format after
//! every addition in ascending inner-index order.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{decompose, ExactAccumulator};
use crate::lpformat::{cvt, is_representable, FormatSpec, Representable, FP32};
use crate::matrix::Matrix;

/// A matrix whose entries are all values of `format`.
#[derive(Debug, Clone)]
pub struct LpMatrix {
    data: Matrix,
    format: FormatSpec,
    /// Integer form for [`exact_gemm`], built on first use.
    ints: OnceLock<Option<IntForm>>,
}

impl PartialEq for LpMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data && self.format == other.format
    }
}

impl LpMatrix {
    pub fn new(data: Matrix, format: FormatSpec) -> Result<Self> {
        let fits = Representable::new(&format);
        if let Some(&bad) = data
            .as_slice()
            .iter()
            .find(|&&v| !(v.is_finite() && fits.test(v)))
        {
            return Err(Error::Representability {
                value: bad,
                format: format.name,
            });
        }
        Ok(Self::new_unchecked(data, format))
    }

    /// Caller guarantees representability (slices come out of the slicer
    /// already checked).
    pub(crate) fn new_unchecked(data: Matrix, format: FormatSpec) -> Self {
        debug_assert!(data
            .as_slice()
            .iter()
            .all(|&v| is_representable(v, &format)));
        Self {
            data,
            format,
            ints: OnceLock::new(),
        }
    }

    fn ints(&self) -> Option<&IntForm> {
        self.ints.get_or_init(|| IntForm::of(&self.data)).as_ref()
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn format(&self) -> &FormatSpec {
        &self.format
    }
}

fn check_shapes(a: &LpMatrix, b: &LpMatrix) -> Result<()> {
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

/// The exponent of the smallest nonzero value.
fn quantum_exp(f: &FormatSpec) -> i32 {
    f.exp_min - (f.mant_bits as i32 - 1)
}

/// Products of `a` and `b` values must be exact in FP64.
fn check_exact_products(a: &FormatSpec, b: &FormatSpec) -> Result<()> {
    if a.mant_bits + b.mant_bits > 53 || quantum_exp(a) + quantum_exp(b) < -1074 {
        return Err(Error::InvalidConfig(format!(
            "products of {a} and {b} values are not exact in fp64"
        )));
    }
    Ok(())
}

/// True when native `f32` arithmetic reproduces the simulated FP32
/// accumulator bit for bit: operands convert exactly, products are exact
/// in `f32`, and an `f32` addition rounds the exact sum once, which is what
/// rounding the FP64 sum to FP32 also yields (53 >= 2*24 + 2).
fn native_f32_path(a: &FormatSpec, b: &FormatSpec, type3: &FormatSpec) -> bool {
    *type3 == FP32
        && a.is_subset_of(&FP32)
        && b.is_subset_of(&FP32)
        && a.mant_bits + b.mant_bits <= 24
        && quantum_exp(a) + quantum_exp(b) >= -149
}

/// `A * B` with every partial sum rounded to `type3`.
pub fn lp_gemm(a: &LpMatrix, b: &LpMatrix, type3: &FormatSpec) -> Result<Matrix> {
    check_shapes(a, b)?;
    check_exact_products(&a.format, &b.format)?;
    if native_f32_path(&a.format, &b.format, type3) {
        lp_gemm_f32(a, b)
    } else {
        lp_gemm_generic(a, b, type3)
    }
}

/// The general kernel: FP64 partial sums passed through [`cvt`] after every
/// addition. Public so the fast path can be checked against it.
pub fn lp_gemm_generic(a: &LpMatrix, b: &LpMatrix, type3: &FormatSpec) -> Result<Matrix> {
    check_shapes(a, b)?;
    check_exact_products(&a.format, &b.format)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let bm = &b.data;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0f64; n];
            for (kk, &x) in a.data.row(i).iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (c, &y) in acc.iter_mut().zip(bm.row(kk)) {
                    *c = cvt(*c + x * y, type3)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    debug_assert!(k == 0 || rows.iter().all(|r| r.len() == n));
    Ok(Matrix::from_vec(m, n, rows.concat()))
}

fn lp_gemm_f32(a: &LpMatrix, b: &LpMatrix) -> Result<Matrix> {
    let (m, n) = (a.rows(), b.cols());
    let bf: Vec<f32> = b.data.as_slice().iter().map(|&v| v as f32).collect();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0f32; n];
            for (kk, &x) in a.data.row(i).iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let x = x as f32;
                let brow = &bf[kk * n..(kk + 1) * n];
                for (c, &y) in acc.iter_mut().zip(brow) {
                    *c += x * y;
                }
            }
            acc.into_iter().map(f64::from).collect()
        })
        .collect();
    let out = Matrix::from_vec(m, n, rows.concat());
    if let Some(&bad) = out.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            value: bad,
            format: FP32.name,
        });
    }
    Ok(out)
}

/// Matrix of exact dot products.
#[derive(Debug, Clone)]
pub struct ExactMatrix {
    rows: usize,
    cols: usize,
    data: Vec<ExactAccumulator>,
}

impl ExactMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &ExactAccumulator {
        &self.data[i * self.cols + j]
    }

    /// True when every exact entry equals the corresponding entry of `m`.
    pub fn equals(&self, m: &Matrix) -> bool {
        m.shape() == self.shape()
            && self
                .data
                .iter()
                .zip(m.as_slice())
                .all(|(e, &v)| e.equals_f64(v))
    }
}

/// `A * B` without any rounding.
pub fn exact_gemm(a: &LpMatrix, b: &LpMatrix) -> Result<ExactMatrix> {
    check_shapes(a, b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let data = match (a.ints(), b.ints()) {
        // each term is below 2^(bits_a + bits_b), so k of them fit an i128
        (Some(ia), Some(ib)) if ia.bits + ib.bits + k.max(1).ilog2() < 125 => {
            let exp = ia.lsb + ib.lsb;
            (0..m)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let mut dots = vec![0i128; n];
                    for (kk, &x) in ia.data[i * k..(i + 1) * k].iter().enumerate() {
                        if x == 0 {
                            continue;
                        }
                        for (d, &y) in dots.iter_mut().zip(&ib.data[kk * n..(kk + 1) * n]) {
                            *d += x as i128 * y as i128;
                        }
                    }
                    dots.into_iter().map(move |d| {
                        let mut acc = ExactAccumulator::new();
                        acc.add_scaled(d < 0, d.unsigned_abs(), exp);
                        acc
                    })
                })
                .collect()
        }
        _ => {
            let bt = b.data.transpose();
            (0..m * n)
                .into_par_iter()
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    crate::exact::exact_dot(a.data.row(i), bt.row(j))
                })
                .collect()
        }
    };
    Ok(ExactMatrix {
        rows: m,
        cols: n,
        data,
    })
}

/// Every entry of a matrix as `data[i] * 2^lsb` with `|data[i]| < 2^bits`.
#[derive(Debug, Clone)]
struct IntForm {
    lsb: i32,
    bits: u32,
    data: Vec<i64>,
}

impl IntForm {
    fn of(m: &Matrix) -> Option<IntForm> {
        let (mut lo, mut hi) = (i32::MAX, i32::MIN);
        for &v in m.as_slice() {
            let (_, mant, e) = decompose(v);
            if mant != 0 {
                lo = lo.min(e + mant.trailing_zeros() as i32);
                hi = hi.max(e + 63 - mant.leading_zeros() as i32);
            }
        }
        if lo > hi {
            (lo, hi) = (0, -1);
        }
        let bits = (hi - lo + 1) as u32;
        if bits > 62 {
            return None;
        }
        let data = m
            .as_slice()
            .iter()
            .map(|&v| {
                let (neg, mant, e) = decompose(v);
                let n = match mant {
                    0 => 0,
                    _ if e >= lo => (mant << (e - lo)) as i64,
                    _ => (mant >> (lo - e)) as i64,
                };
                if neg {
                    -n
                } else {
                    n
                }
            })
            .collect();
        Some(IntForm {
            lsb: lo,
            bits,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpformat::{BF16, FP16, FP8_E4M3};

    fn lp(rows: usize, cols: usize, v: Vec<f64>, f: FormatSpec) -> LpMatrix {
        LpMatrix::new(Matrix::from_vec(rows, cols, v), f).unwrap()
    }

    #[test]
    fn small_integers() {
        let a = lp(1, 3, vec![1.0, 2.0, 3.0], FP16);
        let b = lp(3, 1, vec![4.0, 5.0, 6.0], FP16);
        assert_eq!(lp_gemm(&a, &b, &FP32).unwrap().as_slice(), &[32.0]);
        assert_eq!(lp_gemm_generic(&a, &b, &FP32).unwrap().as_slice(), &[32.0]);
        let e = exact_gemm(&a, &b).unwrap();
        assert!(e.get(0, 0).equals_f64(32.0));
    }

    #[test]
    fn fp32_absorbs_the_one() {
        let two24 = 2f64.powi(24);
        let a = lp(1, 2, vec![two24, 1.0], FP32);
        let b = lp(2, 1, vec![1.0, 1.0], FP32);
        assert_eq!(lp_gemm(&a, &b, &FP32).unwrap().as_slice(), &[two24]);
        let e = exact_gemm(&a, &b).unwrap();
        assert!(!e.equals(&lp_gemm(&a, &b, &FP32).unwrap()));
    }

    #[test]
    fn empty_inner_dimension() {
        let a = lp(2, 0, vec![], FP16);
        let b = lp(0, 3, vec![], FP16);
        let c = lp_gemm(&a, &b, &FP32).unwrap();
        assert_eq!(c, Matrix::zeros(2, 3));
        let c = lp_gemm(&a, &b, &FP16).unwrap();
        assert_eq!(c, Matrix::zeros(2, 3));
    }

    #[test]
    fn fp16_accumulation_rounds() {
        // 2^12 * 1 + 1 * 1: 4097 needs 13 bits, fp16 keeps 11
        let a = lp(1, 2, vec![4096.0, 1.0], FP16);
        let b = lp(2, 1, vec![1.0, 1.0], FP16);
        let c = lp_gemm(&a, &b, &FP16).unwrap();
        assert_eq!(c.as_slice(), &[4096.0]);
        let e = exact_gemm(&a, &b).unwrap();
        assert!(!e.equals(&c));
        assert!(e.get(0, 0).equals_f64(4097.0));
    }

    #[test]
    fn rejects_bad_operands() {
        assert!(matches!(
            LpMatrix::new(Matrix::from_vec(1, 1, vec![2049.0]), FP16),
            Err(Error::Representability { .. })
        ));
        let a = lp(1, 2, vec![1.0, 1.0], FP16);
        let b = lp(1, 1, vec![1.0], FP16);
        assert!(matches!(lp_gemm(&a, &b, &FP32), Err(Error::Dimension(_))));
    }

    #[test]
    fn overflow_is_reported() {
        let a = lp(1, 2, vec![60000.0, 60000.0], FP16);
        let b = lp(2, 1, vec![1.0, 1.0], FP16);
        assert!(matches!(
            lp_gemm(&a, &b, &FP16),
            Err(Error::Overflow { .. })
        ));
        let big = BF16.max_finite();
        let a = lp(1, 1, vec![big], BF16);
        assert!(matches!(
            lp_gemm(&a, &a, &FP32),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn fast_path_matches_generic() {
        let mut state = 7u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for fmt in [FP16, FP8_E4M3] {
            let (m, k, n) = (5, 300, 4);
            let mut gen = |len| -> Vec<f64> {
                (0..len)
                    .map(|_| {
                        let r = next();
                        let v = ((r >> 20) % 4000) as f64 / 37.0 - 50.0;
                        cvt(v * 2f64.powi((r % 7) as i32 - 3), &fmt).unwrap()
                    })
                    .collect()
            };
            let a = lp(m, k, gen(m * k), fmt);
            let b = lp(k, n, gen(k * n), fmt);
            assert!(native_f32_path(&fmt, &fmt, &FP32));
            let fast = lp_gemm(&a, &b, &FP32).unwrap();
            let slow = lp_gemm_generic(&a, &b, &FP32).unwrap();
            assert!(fast.bitwise_eq(&slow), "{fmt}");
        }
        assert!(!native_f32_path(&BF16, &BF16, &FP32));
    }

    #[test]
    fn integer_and_accumulator_paths_agree() {
        let f = |i: usize, j: usize| {
            let v = ((i * 7 + j * 13) % 23) as f64 - 11.0;
            cvt(v * 2f64.powi((i as i32 + 3 * j as i32) % 9 - 4), &FP16).unwrap()
        };
        let a = LpMatrix::new(Matrix::from_fn(3, 40, f), FP16).unwrap();
        let b = LpMatrix::new(Matrix::from_fn(40, 2, |i, j| f(j, i)), FP16).unwrap();
        // the tiny entry widens the span past the integer window
        let mut wide = a.as_matrix().clone();
        wide[(0, 0)] = 2f64.powi(-133);
        wide[(0, 1)] = 2f64.powi(127);
        let wide = LpMatrix::new(wide, BF16).unwrap();
        for a in [a, wide] {
            let e = exact_gemm(&a, &b).unwrap();
            assert_eq!(a.ints().is_some(), a.format == FP16);
            let bt = b.as_matrix().transpose();
            for i in 0..3 {
                for j in 0..2 {
                    let want = crate::exact::exact_dot(a.as_matrix().row(i), bt.row(j));
                    assert_eq!(e.get(i, j), &want);
                }
            }
        }
    }
}
