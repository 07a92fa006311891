//! Batch command-line surface for the memory engine.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 internal/IO,
//! 2 usage or bad input, 3 adapter/transport failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pyramem::Error;

#[derive(Parser)]
#[command(name = "pyramem", version, about = "Hierarchical multimodal memory engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a memory snapshot from a frame dump or feature file.
    Build {
        /// Raw frame dump (MMFR binary).
        #[arg(long, conflicts_with = "features")]
        frames: Option<PathBuf>,
        /// Per-frame feature records (tab-separated text).
        #[arg(long)]
        features: Option<PathBuf>,
        /// Subtitle track (start<TAB>end<TAB>text lines).
        #[arg(long)]
        subtitles: Option<PathBuf>,
        /// Output snapshot directory.
        #[arg(long)]
        out: PathBuf,
        /// key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Answer a multiple-choice question over a snapshot.
    Query {
        #[arg(long)]
        mem: PathBuf,
        #[arg(long)]
        question: String,
        /// Answer candidates; repeat the flag, at least twice.
        #[arg(long = "choice")]
        choices: Vec<String>,
        /// Write the retrieval trace (JSON lines) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Entropy stop threshold override (nats).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Machine-check both variational information-bottleneck bounds.
    VerifyIb {
        /// Number of seeded random instances.
        #[arg(long, default_value_t = 500)]
        instances: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Check one serialized instance file instead.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Check the built-in tight deterministic-chain instance.
        #[arg(long, default_value_t = false)]
        builtin_chain: bool,
    },
    /// Train the toy trace policy on the planted-keyword task.
    TrainToy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Per-epoch report file (key=value lines).
        #[arg(long)]
        report: PathBuf,
        /// Final policy checkpoint; defaults to the report path with a
        /// .mmpo extension.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print layer counts and graph statistics for a snapshot.
    Stats {
        #[arg(long)]
        mem: PathBuf,
    },
    /// Export the schema records and a plain edge list.
    ExportGraph {
        #[arg(long)]
        mem: PathBuf,
        /// Output directory for graph.rec and edges.tsv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Adapter(_) | Error::Transport(_) | Error::Protocol { .. } => 3,
        Error::Parse(_)
        | Error::Config(_)
        | Error::Corruption(_)
        | Error::Consistency(_)
        | Error::Domain(_)
        | Error::Shape(_)
        | Error::Contract(_) => 2,
        Error::Training { .. } | Error::IoAt { .. } | Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build {
            frames,
            features,
            subtitles,
            out,
            config,
            seed,
        } => commands::build(frames, features, subtitles, out, config, seed),
        Command::Query {
            mem,
            question,
            choices,
            trace,
            config,
            gamma,
        } => commands::query(mem, question, choices, trace, config, gamma),
        Command::VerifyIb {
            instances,
            seed,
            instance,
            builtin_chain,
        } => commands::verify_ib(instances, seed, instance, builtin_chain),
        Command::TrainToy {
            config,
            seed,
            report,
            checkpoint,
        } => commands::train_toy(config, seed, report, checkpoint),
        Command::Stats { mem } => commands::stats(mem),
        Command::ExportGraph { mem, out } => commands::export_graph(mem, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
