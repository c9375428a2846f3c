#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::Zero;
use proptest::prelude::*;

/// Finite normal doubles with biased exponent in `lo..=hi`.
pub fn normal_in(lo: u64, hi: u64) -> impl Strategy<Value = f64> {
    (any::<bool>(), lo..=hi, 0u64..1 << 52)
        .prop_map(|(s, e, f)| f64::from_bits(((s as u64) << 63) | (e << 52) | f))
}

/// `mant * 2^exp` as a big integer scaled by `2^-scale`; `exp >= scale`.
fn scaled(mant: u64, exp: i32, neg: bool, scale: i32) -> BigInt {
    let v = BigInt::from(mant) << (exp - scale) as usize;
    if neg {
        -v
    } else {
        v
    }
}

fn parts(x: f64) -> (bool, u64, i32) {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1 << 52) - 1);
    if biased == 0 {
        (bits >> 63 == 1, frac, -1074)
    } else {
        (bits >> 63 == 1, frac | 1 << 52, biased - 1075)
    }
}

/// Independent check that `r` is the round-to-nearest-even value of the
/// exact `sum a[i] * b[i]`, using big-integer arithmetic.
pub fn is_correctly_rounded_dot(a: &[f64], b: &[f64], r: f64) -> bool {
    const SCALE: i32 = -2148;
    let mut exact = BigInt::zero();
    for (&x, &y) in a.iter().zip(b) {
        let (nx, mx, ex) = parts(x);
        let (ny, my, ey) = parts(y);
        let p = (BigInt::from(mx) * BigInt::from(my)) << (ex + ey - SCALE) as usize;
        if nx ^ ny {
            exact -= p;
        } else {
            exact += p;
        }
    }
    let at = |v: f64| {
        let (n, m, e) = parts(v);
        scaled(m, e, n, SCALE)
    };
    let d = |v: f64| {
        let t: BigInt = &exact - at(v);
        if t < BigInt::zero() {
            -t
        } else {
            t
        }
    };
    let even = r.to_bits() & 1 == 0;
    let dr = d(r);
    [r.next_up(), r.next_down()]
        .into_iter()
        .filter(|v| v.is_finite())
        .all(|v| {
            let dv = d(v);
            dr < dv || (dr == dv && even)
        })
}
