//! The Ozaki-scheme product: slice both operands, run every slice-pair
//! product on the simulated low-precision unit, then scale by the slice
//! exponents and accumulate in FP64.

use std::time::Instant;

use serde::Serialize;

use crate::arith::{ArithMode, Emulated, Fp64Arith, Hardware};
use crate::error::{Error, Result};
use crate::lpformat::{FormatSpec, FP16, FP32};
use crate::lpgemm::{lp_gemm, LpMatrix};
use crate::matrix::Matrix;
use crate::slicing::{
    check_accumulator, check_feasible, compute_params, slice_matrix_limited, Orientation, SliceSet,
    SlicingParams,
};

pub use crate::matrix::transpose;

/// Order in which the scaled slice-pair terms of one block are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccumulationOrder {
    /// Largest `p + q` first, so the smallest terms are summed before the
    /// leading ones; ties by `(p, q)`.
    #[default]
    DescendingDegree,
    /// `(p, q)` lexicographic.
    Lexicographic,
}

impl AccumulationOrder {
    /// The slice pairs of an `sa x sb` block in summation order.
    pub fn pairs(self, sa: usize, sb: usize) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = (0..sa).flat_map(|p| (0..sb).map(move |q| (p, q))).collect();
        if self == AccumulationOrder::DescendingDegree {
            pairs.sort_by_key(|&(p, q)| (std::cmp::Reverse(p + q), p, q));
        }
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GemmConfig {
    pub type2: FormatSpec,
    pub type3: FormatSpec,
    /// Inner block width; 0 disables blocking.
    pub k_block: usize,
    pub fp64_emulation: bool,
    /// Cap on slices per operand; `None` slices until the residual vanishes.
    pub max_slices: Option<usize>,
    pub accumulation_order: AccumulationOrder,
    /// Seed for workload generation; the product itself is deterministic.
    pub seed: u64,
}

impl Default for GemmConfig {
    fn default() -> Self {
        Self {
            type2: FP16,
            type3: FP32,
            k_block: 0,
            fp64_emulation: false,
            max_slices: None,
            accumulation_order: AccumulationOrder::default(),
            seed: 0,
        }
    }
}

impl GemmConfig {
    pub fn new(type2: FormatSpec, type3: FormatSpec) -> Self {
        Self {
            type2,
            type3,
            ..Self::default()
        }
    }

    pub fn arith_mode(&self) -> ArithMode {
        if self.fp64_emulation {
            ArithMode::Emulated
        } else {
            ArithMode::Hardware
        }
    }

    /// Block width actually used for inner dimension `k`.
    pub fn block_width(&self, k: usize) -> usize {
        if self.k_block == 0 {
            k
        } else {
            self.k_block
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.k_block > k {
            return Err(Error::InvalidConfig(format!(
                "k_block {} exceeds k {k}",
                self.k_block
            )));
        }
        if self.max_slices == Some(0) {
            return Err(Error::InvalidConfig("max_slices must be at least 1".into()));
        }
        Ok(())
    }

    /// Slicing constants for blocks of this configuration.
    pub fn params(&self, k: usize) -> SlicingParams {
        compute_params(
            53,
            self.type2.mant_bits,
            self.type3.mant_bits,
            self.block_width(k),
        )
    }
}

/// Slice counts of one inner block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockStats {
    pub k_start: usize,
    pub k_end: usize,
    /// Slices of the left operand.
    pub s_a: usize,
    /// Slices of the right operand.
    pub s_b: usize,
    pub gemms: u64,
}

/// Element operations per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseTally {
    pub slicing: u64,
    pub gemm: u64,
    pub accumulation: u64,
}

/// Wall time per phase, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub slicing: f64,
    pub gemm: f64,
    pub accumulation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OzStats {
    pub params: SlicingParams,
    pub blocks: Vec<BlockStats>,
    pub gemm_count: u64,
    pub ops: PhaseTally,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone)]
pub struct OzResult {
    pub c: Matrix,
    pub stats: OzStats,
}

/// Emulated FP64 product `A * B`.
pub fn oz_gemm(a: &Matrix, b: &Matrix, cfg: &GemmConfig) -> Result<OzResult> {
    match cfg.arith_mode() {
        ArithMode::Hardware => run::<Hardware>(a, b, cfg),
        ArithMode::Emulated => run::<Emulated>(a, b, cfg),
    }
}

/// `A` must match `cfg.arith_mode()`, which also drives the slicer.
fn run<A: Fp64Arith>(a: &Matrix, b: &Matrix, cfg: &GemmConfig) -> Result<OzResult> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if k != b.rows() {
        return Err(Error::Dimension(format!("{m}x{k} times {}x{n}", b.rows())));
    }
    cfg.validate(k)?;
    for &v in a.as_slice().iter().chain(b.as_slice()) {
        if !v.is_finite() {
            return Err(Error::NonFinite(v));
        }
    }
    let params = cfg.params(k);
    check_feasible(&params, &cfg.type2)?;
    check_accumulator(&params, &cfg.type3)?;

    let mut c = Matrix::zeros(m, n);
    let mut stats = OzStats {
        params,
        blocks: Vec::new(),
        gemm_count: 0,
        ops: PhaseTally::default(),
        times: PhaseTimes::default(),
    };
    let width = cfg.block_width(k).max(1);
    let mut start = 0;
    while start < k {
        let end = (start + width).min(k);
        let block = ozaki_block::<A>(
            &a.column_block(start, end),
            &b.row_block(start, end),
            cfg,
            &params,
            &mut stats,
        )?;
        let t = Instant::now();
        for (x, &y) in c.as_mut_slice().iter_mut().zip(block.c.as_slice()) {
            *x = A::add(*x, y)?;
        }
        stats.ops.accumulation += (m * n) as u64;
        stats.times.accumulation += t.elapsed().as_secs_f64();
        stats.gemm_count += block.gemms;
        stats.blocks.push(BlockStats {
            k_start: start,
            k_end: end,
            s_a: block.s_a,
            s_b: block.s_b,
            gemms: block.gemms,
        });
        start = end;
    }
    Ok(OzResult { c, stats })
}

struct BlockOutput {
    c: Matrix,
    s_a: usize,
    s_b: usize,
    gemms: u64,
}

/// Steps per slice: max search, two shift additions, the residual and the
/// scaling of the head.
const SLICING_OPS_PER_ELEMENT: u64 = 5;

fn slicing_ops(set: &SliceSet, len: usize) -> u64 {
    set.counts.iter().map(|&s| s as u64).sum::<u64>() * len as u64 * SLICING_OPS_PER_ELEMENT
}

fn ozaki_block<A: Fp64Arith>(
    a: &Matrix,
    b: &Matrix,
    cfg: &GemmConfig,
    params: &SlicingParams,
    stats: &mut OzStats,
) -> Result<BlockOutput> {
    let (m, len, n) = (a.rows(), a.cols(), b.cols());
    let mode = cfg.arith_mode();
    let t = Instant::now();
    let sa = slice_matrix_limited(
        a,
        Orientation::Rows,
        &cfg.type2,
        params,
        mode,
        cfg.max_slices,
    )?;
    let sb = slice_matrix_limited(
        b,
        Orientation::Columns,
        &cfg.type2,
        params,
        mode,
        cfg.max_slices,
    )?;
    stats.ops.slicing += slicing_ops(&sa, len) + slicing_ops(&sb, len);
    stats.times.slicing += t.elapsed().as_secs_f64();

    let mut acc = Matrix::zeros(m, n);
    let pairs = cfg.accumulation_order.pairs(sa.len(), sb.len());
    for &(p, q) in &pairs {
        let t = Instant::now();
        let g = lp_gemm(
            &LpMatrix::new_unchecked(sa.coeff[p].clone(), cfg.type2),
            &LpMatrix::new_unchecked(sb.coeff[q].clone(), cfg.type2),
            &cfg.type3,
        )?;
        stats.ops.gemm += 2 * (m * n * len) as u64;
        stats.times.gemm += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let (ea, eb) = (&sa.expo[p], &sb.expo[q]);
        for (i, &e) in ea.iter().enumerate().take(m) {
            let grow = g.row(i);
            for ((x, &y), &f) in acc.row_mut(i).iter_mut().zip(grow).zip(eb) {
                let term = A::scale2(y, e + f)?;
                *x = A::add(*x, term)?;
            }
        }
        stats.ops.accumulation += 2 * (m * n) as u64;
        stats.times.accumulation += t.elapsed().as_secs_f64();
    }
    Ok(BlockOutput {
        c: acc,
        s_a: sa.len(),
        s_b: sb.len(),
        gemms: pairs.len() as u64,
    })
}

/// Slice-pair products `oz_gemm` runs on fully filled inputs:
/// `ceil(k / k_block)` blocks of `s^2` each.
pub fn oz_gemm_count(m: usize, n: usize, k: usize, cfg: &GemmConfig) -> Result<u64> {
    cfg.validate(k)?;
    if m == 0 || n == 0 || k == 0 {
        return Ok(0);
    }
    let params = cfg.params(k);
    check_feasible(&params, &cfg.type2)?;
    check_accumulator(&params, &cfg.type3)?;
    let s = params
        .predicted_slices()
        .expect("feasible params predict a slice count") as u64;
    let width = cfg.block_width(k);
    Ok(k.div_ceil(width) as u64 * s * s)
}
