use ozaki::fp64emu::{
    emu_add, emu_ceil_log2abs, emu_lt, emu_max, emu_mul, emu_scale2, emu_sub, mul_mantissa, F64Word,
};
use proptest::prelude::*;

mod common;
use common::normal_in;

fn w(x: f64) -> F64Word {
    F64Word::from_f64(x)
}

fn bits(r: ozaki::Result<F64Word>) -> u64 {
    r.unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20_000))]

    #[test]
    fn mul_matches_hardware(a in normal_in(300, 1700), b in normal_in(300, 1700)) {
        // exponents in [300, 1700] can multiply past the normal range; the
        // emulation must then refuse instead of returning wrong bits
        let hw = a * b;
        match emu_mul(w(a), w(b)) {
            Ok(r) => prop_assert_eq!(r.0, hw.to_bits()),
            Err(e) => prop_assert!(!hw.is_normal(), "{e} for normal product {hw:e}"),
        }
        prop_assert_eq!(emu_mul(w(a), w(b)).is_ok(), hw.is_normal());
    }

    #[test]
    fn add_sub_match_hardware(a in normal_in(300, 1700), b in normal_in(300, 1700)) {
        prop_assert_eq!(bits(emu_add(w(a), w(b))), (a + b).to_bits());
        prop_assert_eq!(bits(emu_sub(w(a), w(b))), (a - b).to_bits());
    }

    #[test]
    fn add_near_exponents(a in normal_in(1000, 1046), d in -60i64..=60, f in 0u64..1 << 52, s: bool) {
        let e = (((a.to_bits() >> 52) & 0x7ff) as i64 + d) as u64;
        let b = f64::from_bits(((s as u64) << 63) | (e << 52) | f);
        prop_assert_eq!(bits(emu_add(w(a), w(b))), (a + b).to_bits());
        prop_assert_eq!(bits(emu_sub(w(a), w(b))), (a - b).to_bits());
    }

    #[test]
    fn compare_matches_hardware(a in normal_in(300, 1700), b in normal_in(300, 1700)) {
        prop_assert_eq!(emu_lt(w(a), w(b)).unwrap(), a < b);
        prop_assert_eq!(emu_lt(w(a), w(a)).unwrap(), false);
        let m = if a < b { b } else { a };
        prop_assert_eq!(bits(emu_max(w(a), w(b))), m.to_bits());
    }

    #[test]
    fn commutative(a in normal_in(300, 1700), b in normal_in(300, 1700)) {
        prop_assert_eq!(bits(emu_add(w(a), w(b))), bits(emu_add(w(b), w(a))));
        prop_assert_eq!(emu_mul(w(a), w(b)), emu_mul(w(b), w(a)));
    }

    #[test]
    fn scale2_roundtrip(a in normal_in(300, 1700), t in -100i32..=100) {
        let s = emu_scale2(w(a), t).unwrap();
        prop_assert_eq!(s.to_f64(), a * 2f64.powi(t));
        prop_assert_eq!(emu_scale2(s, -t).unwrap(), w(a));
    }

    #[test]
    fn ceil_log2_matches_definition(a in normal_in(1, 2046)) {
        let c = emu_ceil_log2abs(w(a)).unwrap();
        let m = a.abs();
        prop_assert!(2f64.powi(c - 1) < m || c - 1 < -1022);
        prop_assert!(m <= 2f64.powi(c) || c > 1023);
    }

    #[test]
    fn mantissa_product_is_exact(a in (1u64 << 52)..(1 << 53), b in (1u64 << 52)..(1 << 53)) {
        let p = mul_mantissa(a, b);
        let full = ((p.hi() as u128) << 64) | p.lo() as u128;
        prop_assert_eq!(full, a as u128 * b as u128);
    }

    #[test]
    fn deterministic(a in normal_in(300, 1700), b in normal_in(300, 1700)) {
        prop_assert_eq!(emu_mul(w(a), w(b)), emu_mul(w(a), w(b)));
        prop_assert_eq!(emu_add(w(a), w(b)), emu_add(w(a), w(b)));
    }
}

#[test]
fn zeros_and_signs() {
    assert_eq!(bits(emu_add(w(1.0), w(-1.0))), 0.0f64.to_bits());
    assert_eq!(bits(emu_add(w(-0.0), w(-0.0))), (-0.0f64).to_bits());
    assert_eq!(bits(emu_add(w(-0.0), w(3.0))), 3.0f64.to_bits());
    assert!(!emu_lt(w(-0.0), w(0.0)).unwrap());
    assert!(!emu_lt(w(0.0), w(-0.0)).unwrap());
}
