//! Error-free slicing of FP64 vectors and matrices into low-precision
//! coefficient slices with per-vector power-of-two exponents.
//!
//! A vector `x` of length `k` is split as `x = sum_p 2^c_p * xs_p` where every
//! entry of `xs_p` is a value of the slice format and every slice-pair dot
//! product `xs_p . ys_q` is exact in the accumulation format.
//!
//! Each step takes `c = ceil(log2 max|x|)` and the shift constant
//! `sigma = 0.75 * 2^(rho + c)`, then extracts the head `v = (x + sigma) - sigma`
//! and continues with the residual `x - v` until it is zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{ArithMode, Emulated, Fp64Arith, Hardware};
use crate::error::{Error, Result};
use crate::exact::{decompose, ExactAccumulator};
use crate::lpformat::{FormatSpec, Representable};
use crate::matrix::Matrix;

/// Constants controlling how many bits each slice may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SlicingParams {
    /// Significand bits of the input (53 for FP64).
    pub m1: u32,
    /// Significand bits of the slice format.
    pub m2: u32,
    /// Significand bits of the accumulation format.
    pub m3: u32,
    /// Inner dimension the error-free guarantee is computed for.
    pub k: usize,
    /// Bits that must be dropped so `k` slice products sum exactly in `m3` bits.
    pub gamma: i32,
    /// Bits that must be dropped so a slice fits in `m2` bits.
    pub xi: i32,
    pub rho: i32,
}

impl SlicingParams {
    /// `m1 - rho`: bits extracted per slice before the round-to-nearest bonus.
    pub fn slice_width(&self) -> i32 {
        self.m1 as i32 - self.rho
    }

    pub fn is_feasible(&self) -> bool {
        self.slice_width() >= 0
    }

    /// Slices needed to cover `bits` significant bits of every vector. Each
    /// step captures `slice_width + 1` bits (the extra one comes from
    /// rounding to nearest).
    pub fn slices_for_span(&self, bits: u32) -> Option<u32> {
        self.is_feasible()
            .then(|| bits.div_ceil(self.slice_width() as u32 + 1))
    }

    /// Slice count for inputs whose significands are fully used.
    pub fn predicted_slices(&self) -> Option<u32> {
        self.slices_for_span(self.m1)
    }
}

/// `ceil(log2 k)` for `k >= 1`.
fn ceil_log2(k: usize) -> i32 {
    k.max(1).next_power_of_two().trailing_zeros() as i32
}

/// Derives `gamma = ceil(m1 - (m3 - log2 k) / 2)`, `xi = m1 - m2` and
/// `rho = max(gamma, xi)`.
///
/// `log2 k` is real-valued; because `2*gamma - 2*m1 + m3` is an integer the
/// ceiling only needs `ceil(log2 k)`, which keeps the computation exact.
/// `k = 0` is treated like `k = 1`.
pub fn compute_params(m1: u32, m2: u32, m3: u32, k: usize) -> SlicingParams {
    let num = 2 * m1 as i32 - m3 as i32 + ceil_log2(k);
    let gamma = (num + 1).div_euclid(2);
    let xi = m1 as i32 - m2 as i32;
    SlicingParams {
        m1,
        m2,
        m3,
        k,
        gamma,
        xi,
        rho: gamma.max(xi),
    }
}

/// Slice-pair GEMMs for a fully filled FP64 input, or `None` when the
/// formats cannot hold a slice.
pub fn predict_gemm_count(m1: u32, m2: u32, m3: u32, k: usize) -> Option<u64> {
    compute_params(m1, m2, m3, k)
        .predicted_slices()
        .map(|s| (s as u64) * (s as u64))
}

/// Checks that `type2` can hold every coefficient the slicing emits: the
/// slice width must be non-negative and the coefficient grid `2^-width` on
/// `[-1, 1]` must lie inside the format's range, subnormals included.
pub fn check_feasible(params: &SlicingParams, type2: &FormatSpec) -> Result<()> {
    if params.m2 != type2.mant_bits {
        return Err(Error::InvalidConfig(format!(
            "slicing params built for {} significand bits, format {type2} has {}",
            params.m2, type2.mant_bits
        )));
    }
    let w = params.slice_width();
    if w < 0 {
        return Err(Error::SlicingInfeasible(format!(
            "{type2} slices with m3={} and k={} need rho={} > m1={}",
            params.m3, params.k, params.rho, params.m1
        )));
    }
    if type2.exp_min - (type2.mant_bits as i32 - 1) > -w || type2.exp_max < 0 {
        return Err(Error::SlicingInfeasible(format!(
            "{type2} cannot represent the coefficient grid 2^-{w}"
        )));
    }
    Ok(())
}

/// Checks that `type3` can hold every partial sum of a slice-pair product:
/// the sums are multiples of `2^-2w` bounded by `k` in magnitude.
pub fn check_accumulator(params: &SlicingParams, type3: &FormatSpec) -> Result<()> {
    if params.m3 != type3.mant_bits {
        return Err(Error::InvalidConfig(format!(
            "slicing params built for {} significand bits, format {type3} has {}",
            params.m3, type3.mant_bits
        )));
    }
    let w = params.slice_width().max(0);
    if type3.exp_min - (type3.mant_bits as i32 - 1) > -2 * w || type3.max_finite() < params.k as f64
    {
        return Err(Error::SlicingInfeasible(format!(
            "{type3} cannot hold slice-pair sums of {} terms on the grid 2^-{}",
            params.k,
            2 * w
        )));
    }
    Ok(())
}

/// `0.75 * 2^e2`, built from bits.
fn shift_constant(e2: i32) -> Result<f64> {
    let e = e2 - 1;
    if !(-1022..=1023).contains(&e) {
        return Err(Error::Range(format!(
            "shift constant 0.75*2^{e2} out of range"
        )));
    }
    Ok(f64::from_bits((((e + 1023) as u64) << 52) | (1 << 51)))
}

/// One extraction step over a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStep {
    /// `ceil(log2 max|x|)`.
    pub c: i32,
    pub sigma: f64,
    /// Extracted head.
    pub v: Vec<f64>,
    /// `x - v`, computed exactly.
    pub residual: Vec<f64>,
}

fn max_abs<A: Fp64Arith>(x: &[f64]) -> Result<f64> {
    let mut mx = 0.0f64;
    for &xi in x {
        // clearing the sign bit is an integer operation
        mx = A::max(mx, f64::from_bits(xi.to_bits() & !(1 << 63)))?;
    }
    Ok(mx)
}

/// Runs one step on `x`, or returns `None` when `x` is all zero.
pub fn slice_step<A: Fp64Arith>(x: &[f64], rho: i32) -> Result<Option<SliceStep>> {
    let mx = max_abs::<A>(x)?;
    if mx.to_bits() == 0 {
        return Ok(None);
    }
    let c = A::ceil_log2abs(mx)?;
    let sigma = shift_constant(rho + c)?;
    let mut v = Vec::with_capacity(x.len());
    let mut residual = Vec::with_capacity(x.len());
    for &xi in x {
        let head = A::sub(A::add(xi, sigma)?, sigma)?;
        v.push(head);
        residual.push(A::sub(xi, head)?);
    }
    Ok(Some(SliceStep {
        c,
        sigma,
        v,
        residual,
    }))
}

/// Slices of one vector, stored slice after slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorSlices {
    width: usize,
    data: Vec<f64>,
    pub exps: Vec<i32>,
}

impl VectorSlices {
    /// Coefficients of slice `p`.
    pub fn coeff(&self, p: usize) -> &[f64] {
        &self.data[p * self.width..(p + 1) * self.width]
    }

    /// Coefficients of every slice in order.
    pub fn coeffs(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(|p| self.coeff(p))
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(&bad) => Err(Error::NonFinite(bad)),
        None => Ok(()),
    }
}

/// One extraction over `rest` with every operation checked by `A`.
fn checked_pass<A: Fp64Arith>(
    rest: &mut [f64],
    coeff: &mut [f64],
    sigma: f64,
    c: i32,
    fits: &Representable,
    type2: &FormatSpec,
) -> Result<()> {
    for (r, out) in rest.iter_mut().zip(coeff) {
        // a zero entry has a zero head and keeps its residual
        if r.to_bits() << 1 == 0 {
            *out = 0.0;
            continue;
        }
        let head = A::sub(A::add(*r, sigma)?, sigma)?;
        *r = A::sub(*r, head)?;
        // the head is a multiple of 2^(c - w) below 2^c in magnitude, so
        // the scaled value is already a Type2 value when feasible
        let q = A::scale2(head, -c)?;
        if !fits.test(q) {
            return Err(Error::Representability {
                value: q,
                format: type2.name,
            });
        }
        *out = q;
    }
    Ok(())
}

/// The operations of [`checked_pass`] on native doubles without branches,
/// writing the residual to `next` and returning its largest magnitude.
/// Returns `None` when some entry needs the checked path, which then
/// reports the precise error.
///
/// Heads are multiples of `2^(c - w)`; while that quantum is normal the
/// scaling by `2^-c` is exact, and a scaled head within `[-1, 1]` on the
/// grid `2^-w` is a Type2 value once the parameters passed
/// [`check_feasible`].
fn native_pass(
    rest: &[f64],
    next: &mut [f64],
    coeff: &mut [f64],
    sigma: f64,
    c: i32,
    w: i32,
) -> Option<f64> {
    if c - w < -1022 || !(-1023..=1022).contains(&c) || w > 50 {
        return None;
    }
    // adding and removing 1.5 * 2^52 rounds to an integer below 2^51
    const ROUND: f64 = 6755399441055744.0;
    let scale = f64::from_bits(((1023 - c) as u64) << 52);
    let grid = f64::from_bits(((1023 + w) as u64) << 52);
    let mut ok = true;
    let mut top = 0u64;
    for ((&r, n), q) in rest.iter().zip(next.iter_mut()).zip(coeff) {
        let head = (r + sigma) - sigma;
        *n = r - head;
        // magnitudes order like their bit patterns
        top = top.max(n.to_bits() & !(1 << 63));
        let s = head * scale;
        let t = s * grid;
        ok &= s.abs() <= 1.0 && (t + ROUND) - ROUND == t;
        *q = s;
    }
    ok.then_some(f64::from_bits(top))
}

/// Extracts one slice of `rest` into `coeff`, given `mx = max |rest|`.
/// Leaves the residual in `rest` and returns the slice exponent and the
/// residual's largest magnitude, or `None` when `rest` is all zero.
fn take_slice<A: Fp64Arith>(
    rest: &mut [f64],
    scratch: &mut [f64],
    coeff: &mut [f64],
    mx: f64,
    params: &SlicingParams,
    fits: &Representable,
    type2: &FormatSpec,
) -> Result<Option<(i32, f64)>> {
    if mx.to_bits() == 0 {
        return Ok(None);
    }
    let c = A::ceil_log2abs(mx)?;
    let sigma = shift_constant(params.rho + c)?;
    if A::NATIVE {
        if let Some(next) = native_pass(rest, scratch, coeff, sigma, c, params.slice_width()) {
            rest.copy_from_slice(scratch);
            return Ok(Some((c, next)));
        }
    }
    checked_pass::<A>(rest, coeff, sigma, c, fits, type2)?;
    Ok(Some((c, max_abs::<A>(rest)?)))
}

/// Slices `x` until the residual vanishes (or `limit` slices were taken).
pub fn slice_vector_with<A: Fp64Arith>(
    x: &[f64],
    type2: &FormatSpec,
    params: &SlicingParams,
    limit: Option<usize>,
) -> Result<VectorSlices> {
    check_feasible(params, type2)?;
    check_input(x)?;
    let n = x.len();
    let mut out = VectorSlices {
        width: n,
        ..Default::default()
    };
    let mut rest = x.to_vec();
    let mut scratch = vec![0.0; n];
    let fits = Representable::new(type2);
    let mut mx = max_abs::<A>(&rest)?;
    while limit.is_none_or(|cap| out.len() < cap) {
        let start = out.data.len();
        out.data.resize(start + n, 0.0);
        let coeff = &mut out.data[start..];
        match take_slice::<A>(&mut rest, &mut scratch, coeff, mx, params, &fits, type2)? {
            Some((c, next)) => {
                out.exps.push(c);
                mx = next;
            }
            None => {
                out.data.truncate(start);
                break;
            }
        }
    }
    Ok(out)
}

pub fn slice_vector(
    x: &[f64],
    type2: &FormatSpec,
    params: &SlicingParams,
    mode: ArithMode,
) -> Result<VectorSlices> {
    match mode {
        ArithMode::Hardware => slice_vector_with::<Hardware>(x, type2, params, None),
        ArithMode::Emulated => slice_vector_with::<Emulated>(x, type2, params, None),
    }
}

/// Which operand a slice set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Left operand: each row is an inner-product vector.
    Rows,
    /// Right operand: each column is an inner-product vector.
    Columns,
}

/// Slices of a whole matrix.
///
/// `coeff[p]` has the shape of the sliced matrix; `expo[p][v]` is the
/// exponent of vector `v` (a row or a column) in slice `p`. Vectors that
/// need fewer slices than the maximum are padded with zero slices and
/// exponent 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pub orientation: Orientation,
    pub type2: FormatSpec,
    pub params: SlicingParams,
    pub coeff: Vec<Matrix>,
    pub expo: Vec<Vec<i32>>,
    /// Slices actually used per vector, before padding.
    pub counts: Vec<usize>,
}

impl SliceSet {
    /// Number of slices `s`.
    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }

    fn vector_count(&self) -> usize {
        self.counts.len()
    }

    /// Coefficient of element `e` of vector `v` in slice `p`.
    fn coeff_at(&self, p: usize, v: usize, e: usize) -> f64 {
        match self.orientation {
            Orientation::Rows => self.coeff[p][(v, e)],
            Orientation::Columns => self.coeff[p][(e, v)],
        }
    }

    /// Checks, with exact arithmetic, that `sum_p 2^expo[p] * coeff[p]`
    /// reproduces `original` bit for bit.
    pub fn reconstructs(&self, original: &Matrix) -> bool {
        let len = match self.orientation {
            Orientation::Rows => original.cols(),
            Orientation::Columns => original.rows(),
        };
        if self.vector_count()
            != match self.orientation {
                Orientation::Rows => original.rows(),
                Orientation::Columns => original.cols(),
            }
            || self.coeff.iter().any(|c| c.shape() != original.shape())
        {
            return false;
        }
        if let Some(equal) = self.reconstructs_native(original) {
            return equal;
        }
        let mut terms = Vec::new();
        for v in 0..self.vector_count() {
            for e in 0..len {
                terms.clear();
                terms.extend((0..self.len()).map(|p| (self.coeff_at(p, v, e), self.expo[p][v])));
                let target = match self.orientation {
                    Orientation::Rows => original[(v, e)],
                    Orientation::Columns => original[(e, v)],
                };
                if !pow2_sum_equals(&terms, target) {
                    return false;
                }
            }
        }
        true
    }
}

impl SliceSet {
    /// Sums the slices from the last one up in FP64, proving with TwoSum
    /// that every addition is exact. Returns `None` when some term or
    /// partial sum cannot be shown exact this way.
    fn reconstructs_native(&self, original: &Matrix) -> Option<bool> {
        let cols = original.cols();
        if cols == 0 || original.rows() == 0 {
            return None;
        }
        let mut acc = vec![0.0f64; original.as_slice().len()];
        let mut ok = true;
        for (slab, exps) in self.coeff.iter().zip(&self.expo).rev() {
            if exps.iter().any(|e| !(-1022..=1023).contains(e)) {
                return None;
            }
            let scale: Vec<f64> = exps
                .iter()
                .map(|&e| f64::from_bits(((1023 + e) as u64) << 52))
                .collect();
            let rows = acc.chunks_mut(cols).zip(slab.as_slice().chunks(cols));
            for (i, (arow, qrow)) in rows.enumerate() {
                match self.orientation {
                    Orientation::Rows => {
                        let s = scale[i];
                        for (a, &q) in arow.iter_mut().zip(qrow) {
                            ok &= exact_add(a, q, s);
                        }
                    }
                    Orientation::Columns => {
                        for ((a, &q), &s) in arow.iter_mut().zip(qrow).zip(&scale) {
                            ok &= exact_add(a, q, s);
                        }
                    }
                }
            }
        }
        ok.then(|| acc.iter().zip(original.as_slice()).all(|(a, b)| a == b))
    }
}

/// `*acc += q * s`, true when the product is exact and TwoSum finds no
/// rounding error in the sum. Overflow shows up as a NaN error term.
#[inline(always)]
fn exact_add(acc: &mut f64, q: f64, s: f64) -> bool {
    let t = q * s;
    let sum = *acc + t;
    let bp = sum - *acc;
    let ap = sum - bp;
    let err = (*acc - ap) + (t - bp);
    *acc = sum;
    (t.abs() >= f64::MIN_POSITIVE || q == 0.0) & (err == 0.0)
}

/// Exact test of `sum(coeff * 2^exp) == target`.
///
/// Uses a 128-bit fixed-point window when all terms fit in it and the full
/// exact accumulator otherwise.
pub fn pow2_sum_equals(terms: &[(f64, i32)], target: f64) -> bool {
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    let mut parts = [(false, 0u64, 0i32); 128];
    let mut n = 0;
    // sum(terms) - target == 0
    for (coeff, c) in terms.iter().copied().chain(std::iter::once((-target, 0))) {
        if coeff == 0.0 {
            continue;
        }
        if n == parts.len() {
            return pow2_sum_equals_slow(terms, target);
        }
        let (neg, m, e) = decompose(coeff);
        let e = e + c;
        lo = lo.min(e);
        hi = hi.max(e + 53);
        parts[n] = (neg, m, e);
        n += 1;
    }
    if n == 0 {
        return true;
    }
    // each term stays below 2^120, so 128 of them cannot overflow an i128
    if hi - lo > 120 {
        return pow2_sum_equals_slow(terms, target);
    }
    let sum: i128 = parts[..n]
        .iter()
        .map(|&(neg, m, e)| {
            let t = (m as i128) << (e - lo);
            if neg {
                -t
            } else {
                t
            }
        })
        .sum();
    sum == 0
}

fn pow2_sum_equals_slow(terms: &[(f64, i32)], target: f64) -> bool {
    let mut acc = ExactAccumulator::new();
    for (coeff, c) in terms.iter().copied().chain(std::iter::once((-target, 0))) {
        let (neg, m, e) = decompose(coeff);
        acc.add_scaled(neg, m as u128, e + c);
    }
    acc.is_zero()
}

/// Slices every row (or column) of `m`.
pub fn slice_matrix_limited(
    m: &Matrix,
    orientation: Orientation,
    type2: &FormatSpec,
    params: &SlicingParams,
    mode: ArithMode,
    limit: Option<usize>,
) -> Result<SliceSet> {
    check_feasible(params, type2)?;
    check_input(m.as_slice())?;
    // columns of the right operand are made contiguous first
    let rest = match orientation {
        Orientation::Rows => m.clone(),
        Orientation::Columns => m.transpose(),
    };
    let (coeff, expo, counts) = match mode {
        ArithMode::Hardware => slice_rows::<Hardware>(rest, type2, params, limit)?,
        ArithMode::Emulated => slice_rows::<Emulated>(rest, type2, params, limit)?,
    };
    let coeff = match orientation {
        Orientation::Rows => coeff,
        Orientation::Columns => coeff.iter().map(Matrix::transpose).collect(),
    };
    Ok(SliceSet {
        orientation,
        type2: *type2,
        params: *params,
        coeff,
        expo,
        counts,
    })
}

type Slabs = (Vec<Matrix>, Vec<Vec<i32>>, Vec<usize>);

/// Slices all rows of `rest` step by step, one slab per step.
fn slice_rows<A: Fp64Arith>(
    mut rest: Matrix,
    type2: &FormatSpec,
    params: &SlicingParams,
    limit: Option<usize>,
) -> Result<Slabs> {
    let (nvec, len) = rest.shape();
    let fits = Representable::new(type2);
    let mut counts = vec![0usize; nvec];
    let (mut coeff, mut expo) = (Vec::new(), Vec::new());
    if len == 0 {
        return Ok((coeff, expo, counts));
    }
    // largest residual magnitude per row, zero once a row is finished
    let mut top: Vec<f64> = (0..nvec)
        .map(|v| max_abs::<A>(rest.row(v)))
        .collect::<Result<_>>()?;
    while limit.is_none_or(|cap| coeff.len() < cap) && top.iter().any(|t| t.to_bits() != 0) {
        let mut slab = Matrix::zeros(nvec, len);
        let mut exps = vec![0i32; nvec];
        rest.as_mut_slice()
            .par_chunks_mut(len)
            .zip(slab.as_mut_slice().par_chunks_mut(len))
            .zip(exps.par_iter_mut())
            .zip(top.par_iter_mut())
            .zip(counts.par_iter_mut())
            .try_for_each_init(
                || vec![0.0; len],
                |scratch, ((((r, q), e), t), n)| -> Result<()> {
                    if let Some((c, next)) =
                        take_slice::<A>(r, scratch, q, *t, params, &fits, type2)?
                    {
                        *e = c;
                        *t = next;
                        *n += 1;
                    }
                    Ok(())
                },
            )?;
        coeff.push(slab);
        expo.push(exps);
    }
    Ok((coeff, expo, counts))
}

pub fn slice_matrix(
    m: &Matrix,
    orientation: Orientation,
    type2: &FormatSpec,
    params: &SlicingParams,
    mode: ArithMode,
) -> Result<SliceSet> {
    slice_matrix_limited(m, orientation, type2, params, mode, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpformat::{is_representable, FP16, FP6_E2M3, FP8_E4M3};

    #[test]
    fn params_examples() {
        let p = compute_params(53, 11, 24, 1024);
        assert_eq!((p.gamma, p.xi, p.rho), (46, 42, 46));
        let p = compute_params(53, 4, 24, 16);
        assert_eq!((p.gamma, p.xi, p.rho), (43, 49, 49));
        let p = compute_params(53, 11, 11, 4096);
        assert_eq!((p.gamma, p.rho, p.slice_width()), (54, 54, -1));
        assert!(!p.is_feasible());
    }

    #[test]
    fn gamma_matches_real_log_for_non_powers_of_two() {
        for k in [1usize, 3, 5, 7, 100, 1000, 1023, 1025, 3000, 100_000] {
            for m3 in [11u32, 24] {
                let g = (53.0 - (m3 as f64 - (k as f64).log2()) / 2.0).ceil() as i32;
                assert_eq!(compute_params(53, 11, m3, k).gamma, g, "k={k} m3={m3}");
            }
        }
    }

    #[test]
    fn predictor_examples() {
        assert_eq!(predict_gemm_count(53, 11, 24, 8), Some(25));
        assert_eq!(predict_gemm_count(53, 4, 24, 2048), Some(121));
        assert_eq!(predict_gemm_count(53, 11, 24, 131072), Some(196));
        assert_eq!(predict_gemm_count(53, 11, 11, 4096), None);
    }

    #[test]
    fn zero_vector_has_no_slices() {
        let p = compute_params(53, 11, 24, 3);
        let s = slice_vector(&[0.0, -0.0, 0.0], &FP16, &p, ArithMode::Hardware).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn single_one_is_one_slice() {
        let p = compute_params(53, 11, 24, 1);
        assert_eq!(p.rho, 42);
        let s = slice_vector(&[1.0], &FP16, &p, ArithMode::Hardware).unwrap();
        assert_eq!(s.coeffs().collect::<Vec<_>>(), vec![&[1.0][..]]);
        assert_eq!(s.exps, vec![0]);
    }

    #[test]
    fn one_plus_tiny_is_two_slices() {
        let p = compute_params(53, 11, 24, 1);
        let x = 1.0 + 2f64.powi(-40);
        for mode in [ArithMode::Hardware, ArithMode::Emulated] {
            // ceil(log2 x) is 1 here, so the head 1.0 is stored as 0.5 * 2^1
            let s = slice_vector(&[x], &FP16, &p, mode).unwrap();
            assert_eq!(s.coeffs().collect::<Vec<_>>(), vec![&[0.5][..], &[1.0][..]]);
            assert_eq!(s.exps, vec![1, -40]);
            assert!(pow2_sum_equals(&[(0.5, 1), (1.0, -40)], x));
        }
    }

    #[test]
    fn step_residual_is_exact() {
        let p = compute_params(53, 4, 24, 8);
        let x = [
            9.87654321,
            -1.23456789,
            3.0,
            0.0,
            7.5e-3,
            -6.125,
            2.0,
            1.0 + f64::EPSILON,
        ];
        let step = slice_step::<Hardware>(&x, p.rho).unwrap().unwrap();
        assert_eq!(step.c, 4);
        assert_eq!(step.sigma, 0.75 * 2f64.powi(p.rho + 4));
        // v is a multiple of the quantum of sigma
        let quantum = 2f64.powi(p.rho + step.c - 53);
        for ((&xi, &v), &r) in x.iter().zip(&step.v).zip(&step.residual) {
            assert_eq!((v / quantum).fract(), 0.0);
            let mut acc = ExactAccumulator::from_f64(xi);
            acc.add(-v);
            assert!(acc.equals_f64(r), "{xi} - {v} != {r}");
        }
    }

    #[test]
    fn infeasible_and_unrepresentable_configs() {
        let p = compute_params(53, 11, 11, 4096);
        assert!(matches!(
            slice_vector(&[1.0], &FP16, &p, ArithMode::Hardware),
            Err(Error::SlicingInfeasible(_))
        ));
        // E2M3 bottoms out at 2^-3 but a width-4 slice needs 2^-4
        let p = compute_params(53, 4, 24, 16);
        assert_eq!(p.slice_width(), 4);
        assert!(matches!(
            check_feasible(&p, &FP6_E2M3),
            Err(Error::SlicingInfeasible(_))
        ));
        let p = compute_params(53, 4, 11, 64);
        assert!(p.slice_width() <= 3);
        check_feasible(&p, &FP6_E2M3).unwrap();
        let p = compute_params(53, 4, 24, 16);
        assert!(matches!(
            check_feasible(&p, &FP16),
            Err(Error::InvalidConfig(_))
        ));
        // eight unit products sum to 8, past the E2M3 maximum of 7.5
        let p = compute_params(53, 11, 4, 8);
        assert!(matches!(
            check_accumulator(&p, &FP6_E2M3),
            Err(Error::SlicingInfeasible(_))
        ));
        let p = compute_params(53, 11, 24, 4096);
        check_accumulator(&p, &crate::lpformat::FP32).unwrap();
    }

    #[test]
    fn nan_rejected() {
        let p = compute_params(53, 11, 24, 2);
        assert!(matches!(
            slice_vector(&[1.0, f64::NAN], &FP16, &p, ArithMode::Hardware),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn identity_matrix_single_slice() {
        let p = compute_params(53, 11, 24, 2);
        let id = Matrix::identity(2, 2);
        for orientation in [Orientation::Rows, Orientation::Columns] {
            let s = slice_matrix(&id, orientation, &FP16, &p, ArithMode::Hardware).unwrap();
            assert_eq!(s.len(), 1);
            assert!(s.coeff[0].bitwise_eq(&id));
            assert_eq!(s.expo[0], vec![0, 0]);
            assert!(s.reconstructs(&id));
        }
    }

    #[test]
    fn powers_of_two_fit_one_slice() {
        // spread 2^0..2^-7 stays inside one 11-bit slice (width 10)
        let p = compute_params(53, 11, 24, 8);
        assert_eq!(p.slice_width(), 10);
        let row: Vec<f64> = (0..8).map(|i| 2f64.powi(-i)).collect();
        let m = Matrix::from_vec(1, 8, row);
        let s = slice_matrix(&m, Orientation::Rows, &FP16, &p, ArithMode::Hardware).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.reconstructs(&m));
    }

    #[test]
    fn ragged_rows_are_padded() {
        let p = compute_params(53, 11, 24, 2);
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.1, 3.0]);
        let s = slice_matrix(&m, Orientation::Rows, &FP16, &p, ArithMode::Hardware).unwrap();
        assert_eq!(s.counts[0], 1);
        assert!(s.counts[1] > 1);
        assert_eq!(s.len(), s.counts[1]);
        for pidx in 1..s.len() {
            assert_eq!(s.coeff[pidx].row(0), &[0.0, 0.0]);
            assert_eq!(s.expo[pidx][0], 0);
        }
        for c in &s.coeff {
            assert!(c.as_slice().iter().all(|&v| is_representable(v, &FP16)));
        }
        assert!(s.reconstructs(&m));
    }

    #[test]
    fn exponents_strictly_decrease() {
        let p = compute_params(53, 4, 24, 16);
        let x: Vec<f64> = (0..16).map(|i| 1.0 + (i as f64) * 0.5731).collect();
        let s = slice_vector(&x, &FP8_E4M3, &p, ArithMode::Hardware).unwrap();
        assert!(s.exps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn slow_and_fast_reconstruction_agree() {
        let terms = [(0.5, 3), (0.25, -60), (-0.75, -200)];
        let target = 4.0 + 2f64.powi(-62) - 0.75 * 2f64.powi(-200);
        assert_eq!(
            pow2_sum_equals(&terms, target),
            pow2_sum_equals_slow(&terms, target)
        );
        assert!(pow2_sum_equals(&[(0.5, 3), (0.25, -2)], 4.0625));
        assert!(!pow2_sum_equals(&[(0.5, 3), (0.25, -2)], 4.0));
        assert!(pow2_sum_equals(&[(0.0, 7)], 0.0));
        assert!(!pow2_sum_equals(&[], 1.0));
    }

    #[test]
    fn capped_slicing_stops_early() {
        let p = compute_params(53, 11, 24, 4);
        let x = [1.1, 2.2, 3.3, 4.4];
        let s = slice_vector_with::<Hardware>(&x, &FP16, &p, Some(2)).unwrap();
        assert_eq!(s.len(), 2);
        let full = slice_vector(&x, &FP16, &p, ArithMode::Hardware).unwrap();
        assert!(full.len() > 2);
        assert_eq!(&full.exps[..2], &s.exps[..]);
    }
}
