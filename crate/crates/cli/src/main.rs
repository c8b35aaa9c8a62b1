use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod inputs;

#[derive(Parser)]
#[command(name = "convblock", version)]
#[command(about = "Analyze, simulate and search loop blockings of convolutional layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Energy table JSON replacing the built-in SRAM/DRAM table.
    #[arg(long, global = true, env = "CONVBLOCK_ENERGY_TABLE")]
    energy_table: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for candidate evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Every buffer gets a memory of its own size.
    Codesign,
    /// Buffers are packed into the pools of `--hierarchy`.
    Fixed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    Exhaustive,
    Beam,
}

#[derive(Args, Clone)]
pub struct MemoryArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Codesign)]
    pub mode: ModeArg,

    /// Hierarchy JSON for fixed mode, or `diannao` for the built-in preset.
    #[arg(long)]
    pub hierarchy: Option<String>,

    /// Cap on total on-chip bytes in codesign mode, in KB.
    #[arg(long)]
    pub budget_kb: Option<u64>,
}

#[derive(Args, Clone)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = SearchArg::Beam)]
    pub search: SearchArg,

    /// Maximum occurrences of each dimension in the string.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,

    /// Beam width.
    #[arg(long, default_value_t = 128)]
    pub beam: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Number of schedules to report.
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Buffers, access counts and energy of one blocking string.
    Analyze {
        /// Preset name (conv1..conv5, fc1, fc2) or layer JSON file.
        #[arg(long)]
        layer: String,
        #[arg(long)]
        string: String,
        #[command(flatten)]
        memory: MemoryArgs,
        /// Keep the overlapping input window when an x tile advances.
        #[arg(long)]
        shift_window: bool,
    },
    /// Executes the loop nest and counts transfers element by element.
    Simulate {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        string: String,
        /// Fail unless the simulation matches the analytic counts exactly.
        #[arg(long)]
        check: bool,
        /// Write the full trace as JSON to this file.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
        /// Refuse layers with more multiply-accumulates than this.
        #[arg(long)]
        mac_cap: Option<u64>,
        #[arg(long)]
        shift_window: bool,
    },
    /// Searches for the cheapest blocking string.
    Optimize {
        #[arg(long)]
        layer: String,
        #[command(flatten)]
        memory: MemoryArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Energy of multi-core unrollings of one or more schedules.
    Multicore {
        #[arg(long)]
        layer: String,
        /// Schedule to unroll; without it the best `--top-k` found are used.
        #[arg(long)]
        string: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        cores: Vec<u64>,
        /// `k`, `xy` or `both`.
        #[arg(long, default_value = "both")]
        scheme: String,
        #[command(flatten)]
        memory: MemoryArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Per-layer design points under a budget and one shared memory design.
    Codesign {
        /// Presets or layer JSON files; a file may hold a list of layers.
        #[arg(long, required = true, num_args = 1..)]
        layer: Vec<String>,
        #[arg(long)]
        budget_kb: Option<u64>,
        /// Design points kept per layer.
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Runs every preset on DianNao and co-designed memories.
    Bench {
        /// Co-design budget in KB.
        #[arg(long, default_value_t = 1024)]
        budget_kb: u64,
        #[command(flatten)]
        search: SearchArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infeasible() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> convblock::Result<ExitCode> {
    let ctx = commands::Context {
        table: inputs::energy_table(cli.energy_table.as_deref())?,
        threads: cli.threads,
    };
    let (out, code) = match &cli.command {
        Command::Analyze { layer, string, memory, shift_window } => {
            (commands::analyze(&ctx, layer, string, memory, *shift_window)?, 0)
        }
        Command::Simulate { layer, string, check, dump_trace, mac_cap, shift_window } => {
            commands::simulate(layer, string, *check, dump_trace.as_deref(), *mac_cap, *shift_window)?
        }
        Command::Optimize { layer, memory, search } => (commands::optimize(&ctx, layer, memory, search)?, 0),
        Command::Multicore { layer, string, cores, scheme, memory, search } => {
            (commands::multicore(&ctx, layer, string.as_deref(), cores, scheme, memory, search)?, 0)
        }
        Command::Codesign { layer, budget_kb, points, search } => {
            (commands::codesign(&ctx, layer, *budget_kb, *points, search)?, 0)
        }
        Command::Bench { budget_kb, search } => (commands::bench(&ctx, *budget_kb, search)?, 0),
    };
    let rendered = match cli.format {
        Format::Text => out.text,
        Format::Json => serde_json::to_string_pretty(&out.json)? + "\n",
        Format::Csv => out.csv,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(ExitCode::from(code))
}
