use anyhow::Result;
use clap::ValueEnum;
use ozaki::{gen_matrix, gen_operands, Matrix};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Uniform values in (1, 10).
    Uniform,
    /// Identity-patterned operands.
    Identity,
    /// Random signed powers of two in `2^-8 .. 2^8`.
    Powers2,
}

fn powers2(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    let e = gen_matrix(rows, cols, seed, -8.5, 8.5)?;
    let s = gen_matrix(rows, cols, seed ^ 1, -1.0, 1.0)?;
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        2f64.powi(e[(i, j)].round() as i32).copysign(s[(i, j)])
    }))
}

/// Operands `A (m x k)` and `B (k x n)`.
pub fn operands(init: Init, m: usize, n: usize, k: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    Ok(match init {
        Init::Uniform => gen_operands(m, n, k, seed, 1.0, 10.0)?,
        Init::Identity => (Matrix::identity(m, k), Matrix::identity(k, n)),
        Init::Powers2 => (
            powers2(m, k, seed)?,
            powers2(k, n, seed ^ 0x9e37_79b9_7f4a_7c15)?,
        ),
    })
}
