//! FP64 arithmetic built from 32- and 64-bit integer operations.
//!
//! Every operation here is bitwise identical to hardware binary64 with
//! round-to-nearest-even for normal operands and results. Zeros are
//! accepted; subnormals, infinities and NaN are rejected with
//! [`Error::Range`] instead of being handled, and so is any result that
//! would overflow or fall below the normal range.
//!
//! Nothing in this module performs floating-point arithmetic: `f64` values
//! only cross the boundary through `to_bits`/`from_bits`.

use crate::error::{Error, Result};

const SIGN_MASK: u64 = 1 << 63;
const FRAC_MASK: u64 = (1 << 52) - 1;
const HIDDEN: u64 = 1 << 52;
const BIAS: i32 = 1023;

/// An FP64 value held as its 64-bit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct F64Word(pub u64);

impl F64Word {
    pub const ZERO: F64Word = F64Word(0);

    pub fn from_f64(x: f64) -> Self {
        F64Word(x.to_bits())
    }

    pub fn to_f64(self) -> f64 {
        f64::from_bits(self.0)
    }

    pub fn encode(sign: bool, biased_exp: u32, fraction: u64) -> Self {
        debug_assert!(biased_exp < 2048 && fraction <= FRAC_MASK);
        F64Word(((sign as u64) << 63) | ((biased_exp as u64) << 52) | fraction)
    }

    pub fn decode(self) -> (bool, u32, u64) {
        (self.sign(), self.biased_exp(), self.fraction())
    }

    pub fn sign(self) -> bool {
        self.0 & SIGN_MASK != 0
    }

    pub fn biased_exp(self) -> u32 {
        ((self.0 >> 52) & 0x7ff) as u32
    }

    pub fn fraction(self) -> u64 {
        self.0 & FRAC_MASK
    }

    pub fn is_zero(self) -> bool {
        self.0 & !SIGN_MASK == 0
    }

    pub fn abs(self) -> Self {
        F64Word(self.0 & !SIGN_MASK)
    }

    /// Zero or a normal finite value.
    fn check(self) -> Result<Option<Unpacked>> {
        let e = self.biased_exp();
        if self.is_zero() {
            return Ok(None);
        }
        if e == 0 || e == 0x7ff {
            return Err(Error::Range(format!(
                "operand {:#018x} is not a normal FP64 value",
                self.0
            )));
        }
        Ok(Some(Unpacked {
            sign: self.sign(),
            exp: e as i32 - BIAS,
            mant: self.fraction() | HIDDEN,
        }))
    }
}

/// Sign, unbiased exponent and 53-bit significand (hidden bit restored).
#[derive(Debug, Clone, Copy)]
struct Unpacked {
    sign: bool,
    exp: i32,
    mant: u64,
}

/// Packs a rounded 53-bit significand, rejecting exponents outside the
/// normal range.
fn pack(sign: bool, exp: i32, mant: u64) -> Result<F64Word> {
    debug_assert!(mant >> 52 == 1);
    let biased = exp + BIAS;
    if !(1..=2046).contains(&biased) {
        return Err(Error::Range(format!(
            "result exponent {exp} outside the normal FP64 range"
        )));
    }
    Ok(F64Word::encode(sign, biased as u32, mant & FRAC_MASK))
}

/// A 128-bit unsigned integer as four 32-bit words, least significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mant128 {
    pub parts: [u32; 4],
}

impl Mant128 {
    pub fn hi(&self) -> u64 {
        ((self.parts[3] as u64) << 32) | self.parts[2] as u64
    }

    pub fn lo(&self) -> u64 {
        ((self.parts[1] as u64) << 32) | self.parts[0] as u64
    }
}

/// Full 64x64 -> 128-bit product assembled from four 32x32 partial
/// products with explicit carry propagation.
pub fn mul_mantissa(a: u64, b: u64) -> Mant128 {
    let a_low = a & 0xFFFF_FFFF;
    let a_high = a >> 32;
    let b_low = b & 0xFFFF_FFFF;
    let b_high = b >> 32;

    let p00 = a_low * b_low;
    let p01 = a_low * b_high;
    let p10 = a_high * b_low;
    let p11 = a_high * b_high;

    let middle = p01.wrapping_add(p10);
    let mut carry = if middle < p01 { 1u64 << 32 } else { 0 };

    let low_result = p00.wrapping_add((middle & 0xFFFF_FFFF) << 32);
    carry += (low_result < p00) as u64;
    let high_result = p11 + (middle >> 32) + carry;

    Mant128 {
        parts: [
            (low_result & 0xFFFF_FFFF) as u32,
            (low_result >> 32) as u32,
            (high_result & 0xFFFF_FFFF) as u32,
            (high_result >> 32) as u32,
        ],
    }
}

impl std::ops::Neg for F64Word {
    type Output = Self;

    fn neg(self) -> Self {
        F64Word(self.0 ^ SIGN_MASK)
    }
}

/// Round-to-nearest-even increment decision.
#[inline]
fn round_up(lsb: u64, guard: bool, sticky: bool) -> bool {
    guard && (sticky || lsb & 1 == 1)
}

pub fn emu_mul(a: F64Word, b: F64Word) -> Result<F64Word> {
    let (ua, ub) = (a.check()?, b.check()?);
    let sign = a.sign() ^ b.sign();
    let (ua, ub) = match (ua, ub) {
        (Some(x), Some(y)) => (x, y),
        _ => return Ok(F64Word(if sign { SIGN_MASK } else { 0 })),
    };
    // product of two 53-bit significands lies in [2^104, 2^106)
    let prod = mul_mantissa(ua.mant, ub.mant);
    let (hi, lo) = (prod.hi(), prod.lo());
    let shift: u32 = if hi >> 41 != 0 { 53 } else { 52 };
    let mut exp = ua.exp + ub.exp + (shift as i32 - 52);
    let mut mant = (hi << (64 - shift)) | (lo >> shift);
    let dropped = lo & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    if round_up(mant, dropped & half != 0, dropped & (half - 1) != 0) {
        mant += 1;
        if mant == 1 << 53 {
            mant >>= 1;
            exp += 1;
        }
    }
    pack(sign, exp, mant)
}

/// Extra low-order bits kept while aligning addends: guard, round and a
/// sticky bit jammed into bit 0.
const EXTRA: u32 = 8;

pub fn emu_add(a: F64Word, b: F64Word) -> Result<F64Word> {
    let (ua, ub) = match (a.check()?, b.check()?) {
        (None, None) => {
            // -0 + -0 = -0, every other zero sum is +0
            return Ok(F64Word(a.0 & b.0 & SIGN_MASK));
        }
        (None, Some(_)) => return Ok(b),
        (Some(_), None) => return Ok(a),
        (Some(x), Some(y)) => (x, y),
    };
    let (big, small) = if (ua.exp, ua.mant) >= (ub.exp, ub.mant) {
        (ua, ub)
    } else {
        (ub, ua)
    };
    let d = (big.exp - small.exp) as u32;
    let big_ext = big.mant << EXTRA;
    let small_ext = small.mant << EXTRA;
    let aligned = if d == 0 {
        small_ext
    } else if d >= 63 {
        1
    } else {
        let sticky = small_ext & ((1u64 << d) - 1) != 0;
        (small_ext >> d) | sticky as u64
    };

    let top = 52 + EXTRA; // position of the hidden bit in the extended form
    let mut exp = big.exp;
    let mut m = if big.sign == small.sign {
        let s = big_ext + aligned;
        if s >> (top + 1) != 0 {
            exp += 1;
            (s >> 1) | (s & 1)
        } else {
            s
        }
    } else {
        let diff = big_ext - aligned;
        if diff == 0 {
            return Ok(F64Word::ZERO);
        }
        let lz = diff.leading_zeros() - (63 - top);
        exp -= lz as i32;
        diff << lz
    };

    let guard = m & (1 << (EXTRA - 1)) != 0;
    let sticky = m & ((1 << (EXTRA - 1)) - 1) != 0;
    m >>= EXTRA;
    if round_up(m, guard, sticky) {
        m += 1;
        if m == 1 << 53 {
            m >>= 1;
            exp += 1;
        }
    }
    pack(big.sign, exp, m)
}

pub fn emu_sub(a: F64Word, b: F64Word) -> Result<F64Word> {
    emu_add(a, -b)
}

/// Map to an integer key that orders like the represented values
/// (with -0 below +0; callers treat equal zeros separately).
fn order_key(w: F64Word) -> u64 {
    if w.sign() {
        !w.0
    } else {
        w.0 | SIGN_MASK
    }
}

pub fn emu_lt(a: F64Word, b: F64Word) -> Result<bool> {
    a.check()?;
    b.check()?;
    if a.is_zero() && b.is_zero() {
        return Ok(false);
    }
    Ok(order_key(a) < order_key(b))
}

/// `if a < b { b } else { a }`.
pub fn emu_max(a: F64Word, b: F64Word) -> Result<F64Word> {
    Ok(if emu_lt(a, b)? { b } else { a })
}

/// `ceil(log2 |a|)` read off the bit pattern.
pub fn emu_ceil_log2abs(a: F64Word) -> Result<i32> {
    let u = a
        .check()?
        .ok_or_else(|| Error::Range("ceil_log2abs of zero".into()))?;
    Ok(if u.mant == HIDDEN { u.exp } else { u.exp + 1 })
}

/// Exact multiplication by `2^t` through the exponent field.
pub fn emu_scale2(a: F64Word, t: i32) -> Result<F64Word> {
    match a.check()? {
        None => Ok(a),
        Some(u) => pack(u.sign, u.exp.saturating_add(t), u.mant),
    }
}
