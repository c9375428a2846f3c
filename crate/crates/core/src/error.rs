use thiserror::Error;

/// Errors raised by the emulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value rounded past the largest finite value of the target format.
    #[error("overflow converting {value:e} to {format}")]
    Overflow { value: f64, format: &'static str },

    /// An operand or result left the normal FP64 range handled by the
    /// integer emulation (zero is always accepted).
    #[error("value outside the supported FP64 range: {0}")]
    Range(String),

    /// NaN or infinity reached an API boundary.
    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("{value:e} is not representable in {format}")]
    Representability { value: f64, format: &'static str },

    #[error("slicing infeasible: {0}")]
    SlicingInfeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("reference entry ({row}, {col}) is zero")]
    DivisionByZero { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
