//! FP64-accurate matrix multiplication assembled from error-free
//! low-precision matrix products (the Ozaki scheme).
//!
//! Inputs are split into slices whose pairwise products are exact on a
//! simulated low-precision GEMM unit; the slice products are scaled and
//! summed in FP64, either on hardware or with an integer-only emulation.
//!
//! ```
//! use ozaki::{oz_gemm, ref_gemm, GemmConfig, Matrix, FP8_E4M3, FP32};
//!
//! let a = Matrix::from_fn(4, 6, |i, j| 1.0 + (i * 6 + j) as f64 / 3.0);
//! let b = Matrix::from_fn(6, 3, |i, j| 2.5 - (i + j) as f64 / 7.0);
//! let r = oz_gemm(&a, &b, &GemmConfig::new(FP8_E4M3, FP32)).unwrap();
//! assert_eq!(r.c, ref_gemm(&a, &b).unwrap());
//! ```

pub mod arith;
pub mod error;
pub mod exact;
pub mod fp64emu;
pub mod gen;
pub mod lpformat;
pub mod lpgemm;
pub mod matrix;
pub mod oracle;
pub mod ozgemm;
pub mod slicing;

pub use arith::{ArithMode, Emulated, Fp64Arith, Hardware};
pub use error::{Error, Result};
pub use exact::{exact_dot, ExactAccumulator};
pub use fp64emu::F64Word;
pub use gen::{gen_matrix, gen_operands};
pub use lpformat::{
    cvt, is_representable, mant_bits, unit_roundoff, Encoding, FormatSpec, BF16, CATALOG, FP16,
    FP32, FP64, FP6_E2M3, FP6_E3M2, FP8_E4M3, FP8_E5M2,
};
pub use lpgemm::{exact_gemm, lp_gemm, ExactMatrix, LpMatrix};
pub use matrix::{transpose, Matrix};
pub use oracle::{
    accuracy_report, max_abs_error, max_rel_error, naive_gemm_fp64, naive_gemm_fp64_blocked,
    ref_gemm, AccuracyReport,
};
pub use ozgemm::{
    oz_gemm, oz_gemm_count, AccumulationOrder, BlockStats, GemmConfig, OzResult, OzStats,
    PhaseTally, PhaseTimes,
};
pub use slicing::{
    check_accumulator, check_feasible, compute_params, pow2_sum_equals, predict_gemm_count,
    slice_matrix, slice_matrix_limited, slice_vector, slice_vector_with, Orientation, SliceSet,
    SlicingParams, VectorSlices,
};
