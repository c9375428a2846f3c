//! `ozaki`: drivers for the emulated DGEMM, its references and checks.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ozaki::{FormatSpec, GemmConfig};

mod inputs;
mod report;
mod verify;

use inputs::Init;

#[derive(Parser)]
#[command(
    name = "ozaki",
    version,
    about = "FP64 GEMM emulation from simulated low-precision GEMMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the minimum GEMM counts per (Type2, Type3, k) as CSV.
    SlicesTable,
    /// Run the emulated product and report its statistics.
    Gemm(GemmArgs),
    /// Compare the emulated and the naive FP64 product with the correctly
    /// rounded reference.
    Accuracy(GemmArgs),
    /// Run randomized invariant suites.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct GemmArgs {
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    m: usize,
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    n: usize,
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    k: usize,
    /// Slice format.
    #[arg(long, default_value = "fp16", value_parser = parse_format)]
    type2: FormatSpec,
    /// Accumulation format of the simulated GEMM unit.
    #[arg(long, default_value = "fp32", value_parser = parse_format)]
    type3: FormatSpec,
    /// Inner block width, 0 for none.
    #[arg(long, default_value_t = 0)]
    kblock: usize,
    /// Run slicing and accumulation with integer-only FP64 emulation.
    #[arg(long)]
    fp64emu: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    max_slices: Option<usize>,
    #[arg(long, value_enum, default_value_t = Init::Uniform)]
    init: Init,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the result matrix as JSON here.
    #[arg(long)]
    dump: Option<PathBuf>,
}

impl GemmArgs {
    fn config(&self) -> GemmConfig {
        GemmConfig {
            k_block: self.kblock,
            fp64_emulation: self.fp64emu,
            max_slices: self.max_slices,
            seed: self.seed,
            ..GemmConfig::new(self.type2, self.type3)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Reconstruction,
    ErrorFree,
    Fp64emu,
    Emulation,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Vector length for the slicing suites.
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_format(s: &str) -> Result<FormatSpec, String> {
    s.parse().map_err(|e: ozaki::Error| e.to_string())
}

fn write_json(value: &impl serde::Serialize, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SlicesTable => {
            print!("{}", report::slices_table());
            Ok(true)
        }
        Command::Gemm(args) => {
            let r = report::gemm(&args, false)?;
            write_json(&r, args.out.as_ref())?;
            Ok(true)
        }
        Command::Accuracy(args) => {
            let r = report::gemm(&args, true)?;
            write_json(&r, args.out.as_ref())?;
            Ok(true)
        }
        Command::Verify(args) => {
            let r = verify::run(&args)?;
            let pass = r.failed == 0;
            write_json(&r, args.out.as_ref())?;
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
