//! `conecast`: run, compare, benchmark and generate streaming CNN models.
//!
//! Exit codes: 0 success, 1 tolerance failure, 2 file, format or shape
//! error, 3 engine error.

mod commands;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::input::InputFormat;

#[derive(Debug, Parser)]
#[command(
    name = "conecast",
    version,
    about = "Row-streaming CNN inference with bounded memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stream one input through a model and print the final output.
    Run(RunArgs),
    /// Check streamed output against the layer-by-layer reference.
    Compare(CompareArgs),
    /// Measure peak memory and events over a sweep of input sizes.
    Bench(BenchArgs),
    /// Write a random zero-bias model and optionally a random input.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// JSON manifest.
    #[arg(long)]
    model: PathBuf,
    /// Raw f32 parameter blob.
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input encoding; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Image to use from an IDX file.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::PerRow)]
    mode: ModeArg,
    /// Stream along the other spatial axis.
    #[arg(long)]
    transpose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    PerRow,
    PerEvent,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Per-step CSV: t, output_0..output_k, events, live_scalars.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-step CSV of the normalized distance to the final output.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// IDX label file; prints the label of the selected image.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Relative tolerance; the absolute floor is a thousandth of it.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Comma-separated input sizes, e.g. "128x8,128x16".
    #[arg(long)]
    sweep: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of nonzero input values.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    None,
    Gap,
    GapDense,
    Dense,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Identity,
    Relu,
    Tanh,
    Mixed,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Also write a random input here.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Number of conv layers.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Input height, or a range such as 4-16.
    #[arg(long, default_value = "4-16")]
    height: String,
    #[arg(long, default_value = "4-16")]
    width: String,
    #[arg(long, default_value = "1-8")]
    channels: String,
    #[arg(long, default_value_t = 3)]
    max_kernel: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Mixed)]
    activation: ActivationArg,
    #[arg(long, value_enum, default_value_t = HeadArg::Any)]
    head: HeadArg,
    #[arg(long, default_value = "1-10")]
    outputs: String,
    #[arg(long)]
    no_stride: bool,
    #[arg(long)]
    no_same: bool,
    /// Fraction of nonzero values in the generated input.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Gen(a) => commands::gen(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
