use anyhow::Result;
use ozaki::fp64emu::{emu_add, emu_lt, emu_max, emu_mul, emu_sub, F64Word};
use ozaki::{
    check_accumulator, check_feasible, compute_params, exact_gemm, gen_matrix, gen_operands,
    is_representable, lp_gemm, oz_gemm, pow2_sum_equals, slice_matrix, slice_vector, ArithMode,
    FormatSpec, GemmConfig, LpMatrix, Matrix, Orientation, BF16, FP16, FP32, FP6_E2M3, FP6_E3M2,
    FP8_E4M3, FP8_E5M2,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::report::SCHEMA_VERSION;
use crate::{Suite, VerifyArgs};

const TYPE2: [FormatSpec; 7] = [FP16, BF16, FP8_E4M3, FP8_E5M2, FP6_E3M2, FP6_E2M3, FP32];

#[derive(Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Description of the first failing trial.
    pub first_failure: Option<String>,
}

#[derive(Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub command: Vec<String>,
    pub seed: u64,
    pub k: usize,
    pub suites: Vec<SuiteReport>,
    pub failed: usize,
}

struct Tally {
    suite: &'static str,
    trials: usize,
    failed: usize,
    first_failure: Option<String>,
}

impl Tally {
    fn new(suite: &'static str) -> Self {
        Tally {
            suite,
            trials: 0,
            failed: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.trials += 1;
        if !ok {
            self.failed += 1;
            self.first_failure.get_or_insert_with(what);
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            suite: self.suite,
            trials: self.trials,
            passed: self.trials - self.failed,
            failed: self.failed,
            first_failure: self.first_failure,
        }
    }
}

/// Row of length `k` with entries `u * 2^e`, `u` uniform in (-1, 1) and
/// `e` rounded from (-40.5, 40.5).
fn spread(rows: usize, k: usize, seed: u64) -> Matrix {
    let u = gen_matrix(rows, k, seed, -1.0, 1.0).unwrap();
    let e = gen_matrix(rows, k, seed ^ 0x5eed, -40.5, 40.5).unwrap();
    Matrix::from_fn(rows, k, |i, j| {
        u[(i, j)] * 2f64.powi(e[(i, j)].round() as i32)
    })
}

fn inputs(rows: usize, k: usize, seed: u64) -> Matrix {
    match seed % 2 {
        0 => gen_matrix(rows, k, seed, 1.0, 10.0).unwrap(),
        _ => spread(rows, k, seed),
    }
}

fn feasible(t2: &FormatSpec, t3: &FormatSpec, k: usize) -> bool {
    let p = compute_params(53, t2.mant_bits, t3.mant_bits, k);
    check_feasible(&p, t2)
        .and(check_accumulator(&p, t3))
        .is_ok()
}

fn reconstruction(args: &VerifyArgs, rng: &mut StdRng) -> SuiteReport {
    let mut t = Tally::new("reconstruction");
    let configs: Vec<FormatSpec> = TYPE2
        .into_iter()
        .filter(|t2| feasible(t2, &FP32, args.k))
        .collect();
    for _ in 0..args.trials {
        let t2 = configs[rng.gen_range(0..configs.len())];
        let seed = rng.gen::<u64>();
        let x = inputs(1, args.k, seed);
        let p = compute_params(53, t2.mant_bits, 24, args.k);
        let ok = match slice_vector(x.row(0), &t2, &p, ArithMode::Hardware) {
            Ok(s) => {
                let exact = x.row(0).iter().enumerate().all(|(i, &xi)| {
                    let terms: Vec<_> = s.coeffs().zip(&s.exps).map(|(c, &e)| (c[i], e)).collect();
                    pow2_sum_equals(&terms, xi)
                });
                exact
                    && s.coeffs()
                        .flatten()
                        .all(|&c| is_representable(c, &t2) && c.abs() <= 1.0)
            }
            Err(_) => false,
        };
        t.record(ok, || format!("type2 {t2}, input seed {seed}"));
    }
    t.finish()
}

fn error_free(args: &VerifyArgs, rng: &mut StdRng) -> SuiteReport {
    let mut t = Tally::new("error-free");
    let mut configs = Vec::new();
    for t2 in TYPE2 {
        for t3 in [FP32, FP16] {
            if t2 != t3 && feasible(&t2, &t3, args.k) {
                configs.push((t2, t3));
            }
        }
    }
    for _ in 0..args.trials {
        let (t2, t3) = configs[rng.gen_range(0..configs.len())];
        let seed = rng.gen::<u64>();
        let a = inputs(2, args.k, seed);
        let b = inputs(2, args.k, seed.wrapping_add(1)).transpose();
        let p = compute_params(53, t2.mant_bits, t3.mant_bits, args.k);
        let check = || -> ozaki::Result<bool> {
            let sa = slice_matrix(&a, Orientation::Rows, &t2, &p, ArithMode::Hardware)?;
            let sb = slice_matrix(&b, Orientation::Columns, &t2, &p, ArithMode::Hardware)?;
            let lp = |c: &Matrix| LpMatrix::new(c.clone(), t2);
            let ys = sb.coeff.iter().map(lp).collect::<ozaki::Result<Vec<_>>>()?;
            for x in &sa.coeff {
                let x = lp(x)?;
                for y in &ys {
                    if !exact_gemm(&x, y)?.equals(&lp_gemm(&x, y, &t3)?) {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        };
        t.record(check().unwrap_or(false), || {
            format!("type2 {t2}, type3 {t3}, input seed {seed}")
        });
    }
    t.finish()
}

fn fp64emu(args: &VerifyArgs, rng: &mut StdRng) -> SuiteReport {
    let mut t = Tally::new("fp64emu");
    let draw = |rng: &mut StdRng| {
        let e: u64 = rng.gen_range(300..=1700);
        f64::from_bits((rng.gen::<u64>() & (1 << 63 | ((1 << 52) - 1))) | e << 52)
    };
    let w = F64Word::from_f64;
    let same = |r: ozaki::Result<F64Word>, h: f64| r.is_ok_and(|r| r.0 == h.to_bits());
    for _ in 0..args.trials {
        let (a, b) = (draw(rng), draw(rng));
        let prod = a * b;
        // products leaving the normal range must be refused
        let mul_ok = match prod.is_normal() {
            true => same(emu_mul(w(a), w(b)), prod),
            false => emu_mul(w(a), w(b)).is_err(),
        };
        let larger = if a < b { b } else { a };
        let ok = same(emu_add(w(a), w(b)), a + b)
            && same(emu_sub(w(a), w(b)), a - b)
            && mul_ok
            && emu_lt(w(a), w(b)).ok() == Some(a < b)
            && same(emu_max(w(a), w(b)), larger);
        t.record(ok, || format!("operands {a:e}, {b:e}"));
    }
    t.finish()
}

fn emulation(args: &VerifyArgs, rng: &mut StdRng) -> SuiteReport {
    let mut t = Tally::new("emulation");
    // each trial is a full product in both modes, so far fewer are run
    for _ in 0..args.trials.div_ceil(100) {
        let t2 = [FP16, FP8_E4M3][rng.gen_range(0..2)];
        let seed = rng.gen::<u64>();
        let (a, b) = gen_operands(8, 8, args.k, seed, 1.0, 10.0).unwrap();
        let mut cfg = GemmConfig::new(t2, FP32);
        let hw = oz_gemm(&a, &b, &cfg);
        cfg.fp64_emulation = true;
        let emu = oz_gemm(&a, &b, &cfg);
        let ok = match (hw, emu) {
            (Ok(h), Ok(e)) => h.c.bitwise_eq(&e.c),
            _ => false,
        };
        t.record(ok, || format!("type2 {t2}, input seed {seed}"));
    }
    t.finish()
}

type SuiteFn = fn(&VerifyArgs, &mut StdRng) -> SuiteReport;

pub fn run(args: &VerifyArgs) -> Result<VerifyReport> {
    let suites: &[(Suite, SuiteFn)] = &[
        (Suite::Reconstruction, reconstruction),
        (Suite::ErrorFree, error_free),
        (Suite::Fp64emu, fp64emu),
        (Suite::Emulation, emulation),
    ];
    let reports: Vec<SuiteReport> = suites
        .iter()
        .enumerate()
        .filter(|(_, (s, _))| args.suite == Suite::All || args.suite == *s)
        .map(|(i, (_, f))| {
            f(
                args,
                &mut StdRng::seed_from_u64(args.seed ^ (i as u64) << 56),
            )
        })
        .collect();
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        command: std::env::args().skip(1).collect(),
        seed: args.seed,
        k: args.k,
        failed: reports.iter().map(|r| r.failed).sum(),
        suites: reports,
    })
}
