//! `relic`: size, compile, simulate, inject, scrub and repair overlay
//! designs.

mod commands;
mod exit;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "relic", version, about = "Reliability-aware overlay fabric toolchain")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "RELIC_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resource requirements and minimal-fabric area of one or more kernels.
    Size(SizeArgs),
    /// Place, route and generate a bitstream.
    Compile(CompileArgs),
    /// Simulate a configured fabric against the reference evaluator.
    Sim(SimArgs),
    /// Configuration-bit sensitivity campaign.
    Inject(InjectArgs),
    /// Two-level scrubbing of an upset trace.
    Scrub(ScrubArgs),
    /// Precompiled and dynamic repair around faulty cells.
    Repair(RepairArgs),
}

#[derive(Args, Debug)]
pub struct SizeArgs {
    /// Kernel file, or a built-in name (conv2x2, conv3x3, sad2x2, sobel).
    #[arg(short, long = "kernel", required = true)]
    pub kernels: Vec<String>,
    #[arg(long, default_value = "none")]
    pub mode: String,
    #[arg(long, default_value_t = 6)]
    pub channel_width: usize,
    #[arg(long, default_value_t = 2)]
    pub separation: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Kernel, hardening mode and target fabric shared by most subcommands.
#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    /// Kernel file, or a built-in name (conv2x2, conv3x3, sad2x2, sobel).
    #[arg(short, long)]
    pub kernel: String,
    #[arg(long, default_value = "none")]
    pub mode: String,
    /// Fabric description; when absent the minimal enclosing fabric is used.
    #[arg(long)]
    pub fabric: Option<PathBuf>,
    /// Multiplies the required cell counts of the generated fabric.
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long, default_value_t = 6)]
    pub channel_width: usize,
    #[arg(long, default_value_t = 2)]
    pub separation: usize,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Bitstream to simulate; compiled from the design when absent.
    #[arg(long)]
    pub bitstream: Option<PathBuf>,
    /// Input vectors CSV, one row per vector in input-port order.
    #[arg(long, conflicts_with = "random")]
    pub vectors: Option<PathBuf>,
    /// Number of random vectors.
    #[arg(long, default_value_t = 100)]
    pub random: usize,
    /// Configuration bits to flip, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub flip: Vec<usize>,
    /// Stuck-at-0 cell, `fu:<row>,<col>`; repeatable.
    #[arg(long)]
    pub stuck: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub bitstream: Option<PathBuf>,
    /// `all`, `random:<n>` or `kinds:<kind>[,<kind>...]`.
    #[arg(long, default_value = "all")]
    pub bits: String,
    /// Random vectors simulated per injection.
    #[arg(long, default_value_t = 64)]
    pub vectors: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Also classify the bits of the device model underneath.
    #[arg(long)]
    pub lower: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScrubArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Upset trace CSV with columns `cycle,level,bit_index`.
    #[arg(long, conflicts_with = "random")]
    pub upsets: Option<PathBuf>,
    /// Random single-bit upsets at the upper level.
    #[arg(long)]
    pub random: Option<usize>,
    /// Cycle span of the random trace.
    #[arg(long, default_value_t = 1_000_000)]
    pub span: u64,
    /// `round_robin` or `priority`.
    #[arg(long, default_value = "round_robin")]
    pub schedule: String,
    /// `upper`, `lower` or `both`.
    #[arg(long, default_value = "both")]
    pub level: String,
    /// Cycles between pass starts; back to back when absent.
    #[arg(long)]
    pub period: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub tf: u64,
    #[arg(long, default_value_t = 64)]
    pub tw: u64,
    /// Device frames per overlay frame.
    #[arg(long, default_value_t = 10)]
    pub factor: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RepairArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Faulty cell, `fu:<row>,<col>`; repeatable.
    #[arg(long)]
    pub faulty: Vec<String>,
    /// Number of precompiled alternate configurations.
    #[arg(long, default_value_t = 0)]
    pub precompiled: usize,
    /// Required spares, `<kind>:<n>`; repeatable.
    #[arg(long)]
    pub spares: Vec<String>,
    /// `per_cell` or `full_overlay`.
    #[arg(long, default_value = "per_cell")]
    pub granularity: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Size(a) => commands::size(a, cli.seed),
        Command::Compile(a) => commands::compile_cmd(a, cli.seed),
        Command::Sim(a) => commands::sim(a, cli.seed),
        Command::Inject(a) => commands::inject(a, cli.seed),
        Command::Scrub(a) => commands::scrub(a, cli.seed),
        Command::Repair(a) => commands::repair(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code as u8)
        }
    }
}
