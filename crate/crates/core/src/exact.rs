//! Exact fixed-point accumulation of FP64 products.
//!
//! A 4352-bit two's-complement register whose least significant bit weighs
//! `2^-2148`, the smallest possible product of two subnormal doubles. Every
//! finite product fits with more than 150 bits of headroom for carries, so
//! sums of products are exact and are rounded to FP64 exactly once.

use crate::error::{Error, Result};

const LIMBS: usize = 68;
const OFFSET: i32 = 2148;
const FRAC_MASK: u64 = (1 << 52) - 1;

#[derive(Clone, PartialEq, Eq)]
pub struct ExactAccumulator {
    limbs: [u64; LIMBS],
}

impl std::fmt::Debug for ExactAccumulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactAccumulator")
            .field("approx", &self.to_f64().ok())
            .finish()
    }
}

impl Default for ExactAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits a finite double into `(negative, mant, exp)` with
/// `|x| = mant * 2^exp`. Zero yields `mant == 0`.
#[inline]
pub(crate) fn decompose(x: f64) -> (bool, u64, i32) {
    debug_assert!(x.is_finite());
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if biased == 0 {
        (neg, frac, -1074)
    } else {
        (neg, frac | (1 << 52), biased - 1075)
    }
}

impl ExactAccumulator {
    pub fn new() -> Self {
        Self { limbs: [0; LIMBS] }
    }

    pub fn from_f64(x: f64) -> Self {
        let mut acc = Self::new();
        acc.add(x);
        acc
    }

    pub fn clear(&mut self) {
        self.limbs = [0; LIMBS];
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    pub fn is_negative(&self) -> bool {
        self.limbs[LIMBS - 1] >> 63 == 1
    }

    /// Adds `x` exactly.
    pub fn add(&mut self, x: f64) {
        let (neg, m, e) = decompose(x);
        self.add_scaled(neg, m as u128, e);
    }

    /// Adds the exact product `a * b`.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        assert!(a.is_finite() && b.is_finite(), "non-finite product term");
        let (na, ma, ea) = decompose(a);
        let (nb, mb, eb) = decompose(b);
        self.add_scaled(na ^ nb, ma as u128 * mb as u128, ea + eb);
    }

    /// Adds `(-1)^neg * mant * 2^exp`; `exp >= -2148`.
    #[inline]
    pub(crate) fn add_scaled(&mut self, neg: bool, mant: u128, exp: i32) {
        if mant == 0 {
            return;
        }
        let pos = (exp + OFFSET) as usize;
        let (limb, bit) = (pos / 64, (pos % 64) as u32);
        let shifted = mant << bit;
        let words = [
            shifted as u64,
            (shifted >> 64) as u64,
            if bit == 0 {
                0
            } else {
                (mant >> (128 - bit)) as u64
            },
        ];
        if neg {
            let mut borrow = false;
            for (i, &w) in words.iter().enumerate() {
                let (d, b1) = self.limbs[limb + i].overflowing_sub(w);
                let (d, b2) = d.overflowing_sub(borrow as u64);
                self.limbs[limb + i] = d;
                borrow = b1 | b2;
            }
            let mut i = limb + 3;
            while borrow && i < LIMBS {
                let (d, b) = self.limbs[i].overflowing_sub(1);
                self.limbs[i] = d;
                borrow = b;
                i += 1;
            }
        } else {
            let mut carry = false;
            for (i, &w) in words.iter().enumerate() {
                let (s, c1) = self.limbs[limb + i].overflowing_add(w);
                let (s, c2) = s.overflowing_add(carry as u64);
                self.limbs[limb + i] = s;
                carry = c1 | c2;
            }
            let mut i = limb + 3;
            while carry && i < LIMBS {
                let (s, c) = self.limbs[i].overflowing_add(1);
                self.limbs[i] = s;
                carry = c;
                i += 1;
            }
        }
    }

    /// Adds another accumulator.
    pub fn merge(&mut self, other: &ExactAccumulator) {
        let mut carry = false;
        for (l, &o) in self.limbs.iter_mut().zip(&other.limbs) {
            let (s, c1) = l.overflowing_add(o);
            let (s, c2) = s.overflowing_add(carry as u64);
            *l = s;
            carry = c1 | c2;
        }
    }

    /// True when the register holds exactly `x`.
    pub fn equals_f64(&self, x: f64) -> bool {
        x.is_finite() && *self == Self::from_f64(x)
    }

    /// Rounds the exact value to the nearest double, ties to even.
    pub fn to_f64(&self) -> Result<f64> {
        let negative = self.is_negative();
        let mag = if negative { self.negated() } else { self.limbs };
        let Some(top) = mag.iter().rposition(|&l| l != 0) else {
            return Ok(0.0);
        };
        let msb = top as i32 * 64 + 63 - mag[top].leading_zeros() as i32;
        // the quantum of the result: 53 bits below the leading one, or the
        // subnormal quantum 2^-1074
        let lsb = (msb - 52).max(OFFSET - 1074);
        let mut mant = if msb >= lsb {
            extract(&mag, lsb, (msb - lsb + 1) as u32)
        } else {
            0
        };
        let guard = lsb > 0 && extract(&mag, lsb - 1, 1) == 1;
        let sticky = lsb > 1 && any_below(&mag, lsb - 1);
        let mut lsb_exp = lsb - OFFSET;
        if guard && (sticky || mant & 1 == 1) {
            mant += 1;
            if mant == 1 << 53 {
                mant >>= 1;
                lsb_exp += 1;
            }
        }
        let bits = if mant < 1 << 52 {
            // subnormal, or exactly 2^-1022 after a rounding carry
            mant
        } else {
            let biased = lsb_exp + 52 + 1023;
            if biased >= 2047 {
                return Err(Error::Overflow {
                    value: if negative {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    },
                    format: "fp64",
                });
            }
            ((biased as u64) << 52) | (mant & FRAC_MASK)
        };
        Ok(f64::from_bits(bits | ((negative as u64) << 63)))
    }

    fn negated(&self) -> [u64; LIMBS] {
        let mut out = [0u64; LIMBS];
        let mut carry = true;
        for (o, &l) in out.iter_mut().zip(&self.limbs) {
            let (s, c) = (!l).overflowing_add(carry as u64);
            *o = s;
            carry = c;
        }
        out
    }
}

/// `len <= 64` bits starting at bit `lo`.
fn extract(limbs: &[u64; LIMBS], lo: i32, len: u32) -> u64 {
    debug_assert!(lo >= 0 && (1..=64).contains(&len));
    let (i, b) = (lo as usize / 64, lo as u32 % 64);
    let mut v = limbs[i] >> b;
    if b != 0 && i + 1 < LIMBS {
        v |= limbs[i + 1] << (64 - b);
    }
    if len == 64 {
        v
    } else {
        v & ((1u64 << len) - 1)
    }
}

/// Any set bit strictly below bit `pos`.
fn any_below(limbs: &[u64; LIMBS], pos: i32) -> bool {
    let (i, b) = (pos as usize / 64, pos as u32 % 64);
    limbs[..i].iter().any(|&l| l != 0) || (b != 0 && limbs[i] & ((1u64 << b) - 1) != 0)
}

/// Exact `sum(a[i] * b[i])`.
pub fn exact_dot(a: &[f64], b: &[f64]) -> ExactAccumulator {
    let mut acc = ExactAccumulator::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add_product(x, y);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_keeps_the_small_term() {
        let acc = exact_dot(&[1e16, 1.0, -1e16], &[1.0, 1.0, 1.0]);
        assert_eq!(acc.to_f64().unwrap(), 1.0);
    }

    #[test]
    fn single_values_roundtrip() {
        for x in [
            0.0,
            1.0,
            -1.0,
            0.1,
            -3.5e300,
            5e-324,
            -2.2250738585072014e-308,
            f64::MAX,
        ] {
            let acc = ExactAccumulator::from_f64(x);
            assert_eq!(acc.to_f64().unwrap(), x);
            assert!(acc.equals_f64(x));
        }
    }

    #[test]
    fn products_of_extremes() {
        let mut acc = ExactAccumulator::new();
        acc.add_product(5e-324, 5e-324);
        assert!(!acc.is_zero());
        assert_eq!(acc.to_f64().unwrap(), 0.0);
        let mut acc = ExactAccumulator::new();
        acc.add_product(f64::MAX, 2.0);
        assert!(acc.to_f64().is_err());
        acc.add_product(f64::MAX, -1.0);
        assert_eq!(acc.to_f64().unwrap(), f64::MAX);
    }

    #[test]
    fn ties_to_even() {
        // 1 + 2^-53 is a tie: stays at 1
        let mut acc = ExactAccumulator::from_f64(1.0);
        acc.add(2f64.powi(-53));
        assert_eq!(acc.to_f64().unwrap(), 1.0);
        // 1 + 2^-53 + 2^-200 is above the tie
        acc.add(2f64.powi(-200));
        assert_eq!(acc.to_f64().unwrap(), 1.0 + f64::EPSILON);
        // (1 + 2^-52) + 2^-53 is a tie with an odd neighbour: rounds up
        let mut acc = ExactAccumulator::from_f64(1.0 + f64::EPSILON);
        acc.add(2f64.powi(-53));
        assert_eq!(acc.to_f64().unwrap(), 1.0 + 2.0 * f64::EPSILON);
    }

    #[test]
    fn sign_crossing() {
        let mut acc = ExactAccumulator::new();
        acc.add(-3.0);
        assert!(acc.is_negative());
        assert_eq!(acc.to_f64().unwrap(), -3.0);
        acc.add(5.0);
        assert_eq!(acc.to_f64().unwrap(), 2.0);
        acc.add(-2.0);
        assert!(acc.is_zero());
    }

    #[test]
    fn subnormal_rounding_carry_into_normal() {
        // just under 2^-1022 by less than half a subnormal quantum
        let mut acc = ExactAccumulator::from_f64(2f64.powi(-1022));
        acc.add_product(-5e-324, 0.25);
        assert_eq!(acc.to_f64().unwrap(), 2f64.powi(-1022));
    }

    #[test]
    fn merge_adds() {
        let mut a = ExactAccumulator::from_f64(1.5);
        let b = ExactAccumulator::from_f64(-4.0);
        a.merge(&b);
        assert_eq!(a.to_f64().unwrap(), -2.5);
    }
}
