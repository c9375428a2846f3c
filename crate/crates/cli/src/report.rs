use std::fmt::Write;
use std::time::Instant;

use anyhow::{Context, Result};
use ozaki::{
    max_rel_error, naive_gemm_fp64_blocked, oz_gemm, predict_gemm_count, ref_gemm, BlockStats,
    GemmConfig, PhaseTally, PhaseTimes, SlicingParams, FP16, FP32, FP6_E3M2, FP8_E4M3,
};
use serde::Serialize;

use crate::inputs::{operands, Init};
use crate::GemmArgs;

pub const SCHEMA_VERSION: u32 = 1;

/// `(Type2, Type3)` columns and inner dimensions of the GEMM-count table.
pub fn slices_table() -> String {
    let columns = [
        (FP16, FP32),
        (FP16, FP16),
        (FP8_E4M3, FP32),
        (FP8_E4M3, FP16),
        (FP6_E3M2, FP32),
        (FP6_E3M2, FP16),
    ];
    let mut out = String::from("type2,type3,k,gemm_count\n");
    for k in (3..=18).map(|e| 1usize << e) {
        for (t2, t3) in columns {
            let count = predict_gemm_count(53, t2.mant_bits, t3.mant_bits, k)
                .map_or_else(|| "--".to_string(), |c| c.to_string());
            writeln!(out, "{t2},{t3},{k},{count}").unwrap();
        }
    }
    out
}

#[derive(Serialize)]
pub struct RunConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub init: Init,
    #[serde(flatten)]
    pub gemm: GemmConfig,
}

#[derive(Serialize)]
pub struct Stats {
    pub params: SlicingParams,
    pub blocks: Vec<BlockStats>,
    pub gemm_count: u64,
    pub ops: PhaseTally,
}

#[derive(Serialize)]
pub struct Accuracy {
    pub size: [usize; 3],
    pub type2: String,
    pub type3: String,
    pub kblock: usize,
    pub err_oz: f64,
    pub err_naive: f64,
    pub dominates: bool,
}

/// Wall times, kept apart from the deterministic fields.
#[derive(Serialize)]
pub struct Timing {
    pub phases: PhaseTimes,
    pub oz_gemm: f64,
    pub reference: Option<f64>,
}

#[derive(Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: Vec<String>,
    pub config: RunConfig,
    pub stats: Stats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Accuracy>,
    pub timing: Timing,
}

pub fn gemm(args: &GemmArgs, with_accuracy: bool) -> Result<RunReport> {
    let cfg = args.config();
    let (a, b) = operands(args.init, args.m, args.n, args.k, args.seed)?;
    let t = Instant::now();
    let r = oz_gemm(&a, &b, &cfg).context("emulated product")?;
    let oz_time = t.elapsed().as_secs_f64();
    if let Some(path) = &args.dump {
        std::fs::write(path, serde_json::to_string(&r.c)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let (accuracy, reference) = if with_accuracy {
        let t = Instant::now();
        let cref = ref_gemm(&a, &b).context("reference product")?;
        let naive = naive_gemm_fp64_blocked(&a, &b, args.kblock)?;
        let err_oz =
            max_rel_error(&r.c, &cref).context("relative error needs a nonzero reference")?;
        let err_naive = max_rel_error(&naive, &cref)?;
        let acc = Accuracy {
            size: [args.m, args.n, args.k],
            type2: cfg.type2.to_string(),
            type3: cfg.type3.to_string(),
            kblock: args.kblock,
            err_oz,
            err_naive,
            dominates: err_oz <= err_naive,
        };
        (Some(acc), Some(t.elapsed().as_secs_f64()))
    } else {
        (None, None)
    };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        command: std::env::args().skip(1).collect(),
        config: RunConfig {
            m: args.m,
            n: args.n,
            k: args.k,
            init: args.init,
            gemm: cfg,
        },
        stats: Stats {
            params: r.stats.params,
            blocks: r.stats.blocks,
            gemm_count: r.stats.gemm_count,
            ops: r.stats.ops,
        },
        accuracy,
        timing: Timing {
            phases: r.stats.times,
            oz_gemm: oz_time,
            reference,
        },
    })
}
