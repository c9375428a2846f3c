use ozaki::exact::ExactAccumulator;
use ozaki::slicing::{pow2_sum_equals, slice_step};
use ozaki::{
    compute_params, gen_matrix, is_representable, slice_matrix, slice_vector, ArithMode,
    FormatSpec, Hardware, Matrix, Orientation, SliceSet, BF16, FP16, FP32, FP8_E4M3, FP8_E5M2,
};
use proptest::prelude::*;

const TYPE2: [FormatSpec; 4] = [FP16, FP8_E4M3, BF16, FP8_E5M2];

/// Uniform(1,10) entries or entries spread over `2^-30 .. 2^30` with mixed
/// signs and zeros.
fn entry() -> impl Strategy<Value = f64> {
    prop_oneof![
        1.0f64..10.0,
        (-1.0f64..1.0, -30i32..=30).prop_map(|(m, e)| m * 2f64.powi(e)),
        Just(0.0),
    ]
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(entry(), 1..48)
}

fn config() -> impl Strategy<Value = (FormatSpec, usize)> {
    (
        0..TYPE2.len(),
        prop::sample::select(vec![8usize, 1024, 16384]),
    )
        .prop_map(|(f, k)| (TYPE2[f], k))
}

fn same_slices(a: &SliceSet, b: &SliceSet) -> bool {
    a.len() == b.len()
        && a.expo == b.expo
        && a.counts == b.counts
        && a.coeff.iter().zip(&b.coeff).all(|(x, y)| x.bitwise_eq(y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn reconstruction_is_exact(x in vector(), (t2, k) in config()) {
        let p = compute_params(53, t2.mant_bits, 24, k);
        let s = slice_vector(&x, &t2, &p, ArithMode::Hardware).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            let terms: Vec<_> = s.coeffs().zip(&s.exps).map(|(c, &e)| (c[i], e)).collect();
            prop_assert!(pow2_sum_equals(&terms, xi));
        }
        for c in s.coeffs().flatten() {
            prop_assert!(is_representable(*c, &t2));
            prop_assert!(c.abs() <= 1.0);
        }
        prop_assert!(s.exps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn each_step_is_exact(x in vector(), (t2, k) in config()) {
        let p = compute_params(53, t2.mant_bits, 24, k);
        let mut cur = x.clone();
        while let Some(step) = slice_step::<Hardware>(&cur, p.rho).unwrap() {
            for ((&xi, &v), &r) in cur.iter().zip(&step.v).zip(&step.residual) {
                let mut acc = ExactAccumulator::from_f64(xi);
                acc.add(-v);
                prop_assert!(acc.equals_f64(r));
            }
            cur = step.residual;
        }
        prop_assert!(cur.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn modes_agree(rows in 1usize..6, cols in 1usize..24, seed: u64, (t2, k) in config()) {
        let m = Matrix::from_fn(rows, cols, |i, j| {
            let h = seed ^ ((i * 131 + j) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let e = (h >> 58) as i32 - 32;
            ((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2f64.powi(e)
        });
        let p = compute_params(53, t2.mant_bits, 24, k);
        for o in [Orientation::Rows, Orientation::Columns] {
            let hw = slice_matrix(&m, o, &t2, &p, ArithMode::Hardware).unwrap();
            let emu = slice_matrix(&m, o, &t2, &p, ArithMode::Emulated).unwrap();
            prop_assert!(same_slices(&hw, &emu));
            prop_assert!(hw.reconstructs(&m));
        }
    }
}

/// Rows of uniform(1,10) values need enough slices to cover the bits from
/// the leading binade `2^4` down to the last bit of entries in `[1, 2)`,
/// which is 57 positions.
#[test]
fn uniform_inputs_span_57_bits() {
    for (t2, t3, k) in [
        (FP16, FP32, 1024),
        (FP8_E4M3, FP32, 64),
        (FP16, FP16, 16),
        (FP8_E4M3, FP16, 8),
    ] {
        let m = gen_matrix(64, 64, 11, 1.0, 10.0).unwrap();
        let p = compute_params(53, t2.mant_bits, t3.mant_bits, k);
        let span = p.slices_for_span(57).unwrap() as usize;
        let s = slice_matrix(&m, Orientation::Rows, &t2, &p, ArithMode::Hardware).unwrap();
        assert_eq!(s.len(), span, "{t2}/{t3} k={k}");
        assert!(s.counts.iter().all(|&c| c <= span));
        assert!(s.len() >= p.predicted_slices().unwrap() as usize);
    }
}

/// Inputs confined to `[1, 2)` with all 53 bits in use cover 54 positions
/// below `2^1`, which matches the predictor whenever `w + 1` does not
/// divide 53.
#[test]
fn single_binade_inputs_meet_the_predictor() {
    let base = gen_matrix(32, 64, 5, 0.0, 1.0).unwrap();
    let m = Matrix::from_fn(32, 64, |i, j| {
        f64::from_bits(
            1f64.to_bits() | (base[(i, j)].to_bits() & ((1 << 52) - 1)) | (j == 0) as u64,
        )
    });
    for t2 in TYPE2 {
        for t3 in [FP32, FP16] {
            for k in [8usize, 64, 1024] {
                let p = compute_params(53, t2.mant_bits, t3.mant_bits, k);
                if ozaki::check_feasible(&p, &t2).is_err() {
                    continue;
                }
                let s = slice_matrix(&m, Orientation::Rows, &t2, &p, ArithMode::Hardware).unwrap();
                assert!(s
                    .counts
                    .iter()
                    .all(|&c| c == p.slices_for_span(54).unwrap() as usize));
                if p.slice_width() != 0 {
                    assert_eq!(
                        s.len(),
                        p.predicted_slices().unwrap() as usize,
                        "{t2}/{t3} k={k}"
                    );
                }
            }
        }
    }
}
