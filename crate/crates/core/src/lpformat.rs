//! Simulated low-precision floating-point formats.
//!
//! Values of a simulated format are carried in `f64` containers. A value
//! "belongs" to a format when [`cvt`] leaves it unchanged; no packed
//! encodings are produced.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// How the top of the exponent range is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// The all-ones exponent encodes infinities and NaNs.
    Ieee,
    /// Only the all-ones exponent with an all-ones mantissa is NaN (OCP E4M3).
    NanOnly,
    /// Every encoding is finite (OCP FP6).
    AllFinite,
}

/// Descriptor of a simulated binary floating-point format.
///
/// `mant_bits` counts the significand bits including the hidden bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormatSpec {
    pub name: &'static str,
    pub exp_bits: u32,
    pub mant_bits: u32,
    /// Exponent of the largest binade.
    pub exp_max: i32,
    /// Exponent of the smallest normal binade.
    pub exp_min: i32,
    pub encoding: Encoding,
}

pub const FP64: FormatSpec = FormatSpec::ieee("fp64", 11, 53);
pub const FP32: FormatSpec = FormatSpec::ieee("fp32", 8, 24);
pub const FP16: FormatSpec = FormatSpec::ieee("fp16", 5, 11);
pub const BF16: FormatSpec = FormatSpec::ieee("bf16", 8, 8);
pub const FP8_E4M3: FormatSpec = FormatSpec::extended("fp8e4m3", 4, 4, Encoding::NanOnly);
pub const FP8_E5M2: FormatSpec = FormatSpec::ieee("fp8e5m2", 5, 3);
pub const FP6_E3M2: FormatSpec = FormatSpec::extended("fp6e3m2", 3, 3, Encoding::AllFinite);
pub const FP6_E2M3: FormatSpec = FormatSpec::extended("fp6e2m3", 2, 4, Encoding::AllFinite);

/// Every built-in format, in CLI-name order.
pub const CATALOG: [FormatSpec; 8] = [
    FP16, BF16, FP8_E4M3, FP8_E5M2, FP6_E3M2, FP6_E2M3, FP32, FP64,
];

impl FormatSpec {
    /// An IEEE-754 style format: the top exponent is reserved.
    pub const fn ieee(name: &'static str, exp_bits: u32, mant_bits: u32) -> Self {
        let bias = (1i32 << (exp_bits - 1)) - 1;
        Self {
            name,
            exp_bits,
            mant_bits,
            exp_max: bias,
            exp_min: 1 - bias,
            encoding: Encoding::Ieee,
        }
    }

    /// A format whose top exponent holds finite values.
    pub const fn extended(
        name: &'static str,
        exp_bits: u32,
        mant_bits: u32,
        encoding: Encoding,
    ) -> Self {
        let bias = (1i32 << (exp_bits - 1)) - 1;
        Self {
            name,
            exp_bits,
            mant_bits,
            exp_max: bias + 1,
            exp_min: 1 - bias,
            encoding,
        }
    }

    /// Validates a user-defined IEEE-style format.
    pub fn custom(name: &'static str, exp_bits: u32, mant_bits: u32) -> Result<Self> {
        if !(1..=53).contains(&mant_bits) || !(2..=11).contains(&exp_bits) {
            return Err(Error::InvalidConfig(format!(
                "format {name}: need 1 <= mant_bits <= 53 and 2 <= exp_bits <= 11"
            )));
        }
        Ok(Self::ieee(name, exp_bits, mant_bits))
    }

    pub fn finite_only(&self) -> bool {
        self.encoding != Encoding::Ieee
    }

    pub fn mant_bits(&self) -> u32 {
        self.mant_bits
    }

    /// `2^-mant_bits`.
    pub fn unit_roundoff(&self) -> f64 {
        pow2(-(self.mant_bits as i32))
    }

    /// Largest finite magnitude.
    pub fn max_finite(&self) -> f64 {
        // NanOnly gives up the all-ones significand of the top binade.
        let lost = match self.encoding {
            Encoding::NanOnly => 2,
            Encoding::Ieee | Encoding::AllFinite => 1,
        };
        let significand = (1u64 << self.mant_bits) - lost;
        compose(0, significand, self.exp_max - (self.mant_bits as i32 - 1))
    }

    /// Smallest positive (subnormal) value.
    pub fn min_positive(&self) -> f64 {
        pow2(self.exp_min - (self.mant_bits as i32 - 1))
    }

    /// True when every value of `self` is also a value of `other`.
    pub fn is_subset_of(&self, other: &FormatSpec) -> bool {
        self.mant_bits <= other.mant_bits
            && self.max_finite() <= other.max_finite()
            && self.exp_min - self.mant_bits as i32 >= other.exp_min - other.mant_bits as i32
    }
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl Serialize for FormatSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name)
    }
}

impl FromStr for FormatSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        CATALOG
            .iter()
            .find(|f| f.name == key)
            .copied()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown format '{s}' (expected one of fp16, bf16, fp8e4m3, fp8e5m2, fp6e3m2, fp6e2m3, fp32, fp64)"
                ))
            })
    }
}

/// Builds `2^e` from its bit pattern. `e` must lie in the normal range.
pub(crate) const fn pow2(e: i32) -> f64 {
    assert!(e >= -1022 && e <= 1023);
    f64::from_bits(((e + 1023) as u64) << 52)
}

const FRAC_MASK: u64 = (1 << 52) - 1;

/// Rounds `value` to the nearest value of `fmt`, ties to even.
///
/// Rounding works on the exact binary significand, so there is no double
/// rounding. Subnormals of `fmt` are produced; overflow past the largest
/// finite value is an error rather than a saturation.
pub fn cvt(value: f64, fmt: &FormatSpec) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    let bits = value.to_bits();
    let sign = bits & (1 << 63);
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if biased == 0 && frac == 0 {
        return Ok(value);
    }
    // value = mant * 2^lsb_exp
    let (mant, lsb_exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1 << 52), biased - 1075)
    };
    let lead_exp = lsb_exp + (63 - mant.leading_zeros() as i32);
    let quantum_exp = lead_exp.max(fmt.exp_min) - (fmt.mant_bits as i32 - 1);

    let rounded = if quantum_exp <= lsb_exp {
        value
    } else {
        let shift = (quantum_exp - lsb_exp) as u32;
        let q = if shift >= 64 {
            // mant < 2^53 <= 2^(shift-1): strictly below half a quantum
            0
        } else {
            let q = mant >> shift;
            let rem = mant & ((1u64 << shift) - 1);
            let half = 1u64 << (shift - 1);
            if rem > half || (rem == half && q & 1 == 1) {
                q + 1
            } else {
                q
            }
        };
        compose(sign, q, quantum_exp)
    };
    // finite positive doubles order like their bit patterns
    if rounded.to_bits() & !(1 << 63) > fmt.max_finite().to_bits() {
        return Err(Error::Overflow {
            value,
            format: fmt.name,
        });
    }
    Ok(rounded)
}

/// `(-1)^sign * q * 2^exp` for a result known to be a normal `f64` (or zero).
fn compose(sign: u64, q: u64, exp: i32) -> f64 {
    if q == 0 {
        return f64::from_bits(sign);
    }
    let lead = 63 - q.leading_zeros() as i32;
    let biased = (exp + lead + 1023) as u64;
    debug_assert!((1..2047).contains(&biased));
    let frac = (q << (52 - lead)) & FRAC_MASK;
    f64::from_bits(sign | (biased << 52) | frac)
}

/// True iff `value` is a value of `fmt` (both signed zeros are).
pub fn is_representable(value: f64, fmt: &FormatSpec) -> bool {
    value.is_finite() && Representable::new(fmt).test(value)
}

/// [`is_representable`] with the format's limits decoded once, for loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Representable {
    exp_min: i32,
    drop: i32,
    max_bits: u64,
}

impl Representable {
    pub(crate) fn new(fmt: &FormatSpec) -> Self {
        Self {
            exp_min: fmt.exp_min,
            drop: fmt.mant_bits as i32 - 1,
            max_bits: fmt.max_finite().to_bits(),
        }
    }

    /// `value` must be finite.
    #[inline]
    pub(crate) fn test(&self, value: f64) -> bool {
        let bits = value.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & FRAC_MASK;
        if biased == 0 && frac == 0 {
            return true;
        }
        let (mant, lsb_exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1 << 52), biased - 1075)
        };
        let lead_exp = lsb_exp + (63 - mant.leading_zeros() as i32);
        let lowest_set = lsb_exp + mant.trailing_zeros() as i32;
        lowest_set >= lead_exp.max(self.exp_min) - self.drop && bits & !(1 << 63) <= self.max_bits
    }
}

pub fn mant_bits(fmt: &FormatSpec) -> u32 {
    fmt.mant_bits
}

pub fn unit_roundoff(fmt: &FormatSpec) -> f64 {
    fmt.unit_roundoff()
}
