//! FP64 operations used by slicing and accumulation, either on hardware or
//! through [`crate::fp64emu`]. Both back ends must agree bit for bit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp64emu::{self, F64Word};

/// Which FP64 implementation runs the slicing and accumulation phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithMode {
    #[default]
    Hardware,
    Emulated,
}

pub trait Fp64Arith {
    /// True for native `f64` arithmetic, which lets hot loops skip the
    /// per-operation checks and validate a whole pass at once.
    const NATIVE: bool = false;

    fn add(a: f64, b: f64) -> Result<f64>;
    fn sub(a: f64, b: f64) -> Result<f64>;
    fn lt(a: f64, b: f64) -> Result<bool>;
    fn max(a: f64, b: f64) -> Result<f64>;
    /// Exact `a * 2^t`.
    fn scale2(a: f64, t: i32) -> Result<f64>;

    /// `ceil(log2 |a|)`. Both back ends read it from the bit pattern, which
    /// is exact and avoids a transcendental call.
    fn ceil_log2abs(a: f64) -> Result<i32> {
        fp64emu::emu_ceil_log2abs(F64Word::from_f64(a))
    }
}

/// Native `f64` operations.
pub struct Hardware;

/// Integer-only emulation.
pub struct Emulated;

impl Fp64Arith for Hardware {
    const NATIVE: bool = true;

    #[inline]
    fn add(a: f64, b: f64) -> Result<f64> {
        Ok(a + b)
    }

    #[inline]
    fn sub(a: f64, b: f64) -> Result<f64> {
        Ok(a - b)
    }

    #[inline]
    fn lt(a: f64, b: f64) -> Result<bool> {
        Ok(a < b)
    }

    #[inline]
    fn max(a: f64, b: f64) -> Result<f64> {
        Ok(if a < b { b } else { a })
    }

    #[inline]
    fn scale2(a: f64, t: i32) -> Result<f64> {
        if a == 0.0 {
            return Ok(a);
        }
        let pow2 = |e: i32| f64::from_bits(((e + 1023) as u64) << 52);
        // steps are monotone between two normals, so none of them rounds
        if (-1022..=1023).contains(&t) {
            let r = a * pow2(t);
            return if r.is_normal() && a.is_normal() {
                Ok(r)
            } else {
                Err(Error::Range(format!(
                    "{a:e} * 2^{t} leaves the normal range"
                )))
            };
        }
        let (mut r, mut rest) = (a, t);
        while rest > 1023 {
            r *= pow2(1023);
            rest -= 1023;
        }
        while rest < -1022 {
            r *= pow2(-1022);
            rest += 1022;
        }
        r *= pow2(rest);
        if r.is_normal() && a.is_normal() {
            Ok(r)
        } else {
            Err(Error::Range(format!(
                "{a:e} * 2^{t} leaves the normal range"
            )))
        }
    }
}

impl Fp64Arith for Emulated {
    #[inline]
    fn add(a: f64, b: f64) -> Result<f64> {
        fp64emu::emu_add(F64Word::from_f64(a), F64Word::from_f64(b)).map(F64Word::to_f64)
    }

    #[inline]
    fn sub(a: f64, b: f64) -> Result<f64> {
        fp64emu::emu_sub(F64Word::from_f64(a), F64Word::from_f64(b)).map(F64Word::to_f64)
    }

    #[inline]
    fn lt(a: f64, b: f64) -> Result<bool> {
        fp64emu::emu_lt(F64Word::from_f64(a), F64Word::from_f64(b))
    }

    #[inline]
    fn max(a: f64, b: f64) -> Result<f64> {
        fp64emu::emu_max(F64Word::from_f64(a), F64Word::from_f64(b)).map(F64Word::to_f64)
    }

    #[inline]
    fn scale2(a: f64, t: i32) -> Result<f64> {
        fp64emu::emu_scale2(F64Word::from_f64(a), t).map(F64Word::to_f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale2_agrees() {
        for (x, t) in [(1.5, 4), (3.0, -1), (-7.25, 100), (0.0, 9999), (1.0, -1022)] {
            assert_eq!(
                Hardware::scale2(x, t).unwrap().to_bits(),
                Emulated::scale2(x, t).unwrap().to_bits()
            );
        }
        assert!(Hardware::scale2(1.0, -1023).is_err());
        assert!(Hardware::scale2(2.0, 1023).is_err());
        assert!(Hardware::scale2(1.5, 1100).is_err());
        let tiny = 2f64.powi(-1000);
        assert_eq!(Hardware::scale2(tiny, 1500).unwrap(), 2f64.powi(500));
        assert_eq!(Emulated::scale2(tiny, 1500).unwrap(), 2f64.powi(500));
    }
}
