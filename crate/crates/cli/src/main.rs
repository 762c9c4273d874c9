mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::{Overrides, RunConfig};

/// Viscoelastic-viscoplastic damage model of epoxy nanocomposites, its LSTM
/// surrogate, and a small finite-element solver.
#[derive(Parser)]
#[command(name = "vevp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset of random loading paths.
    Generate(Common),
    /// Train the LSTM surrogate on a dataset.
    Train(Common),
    /// Drive a single material point along a scripted or stored path.
    MpDrive(Common),
    /// Time per-step evaluation of both backends.
    Bench(Common),
    /// Run a force-displacement program on a hexahedral mesh.
    Fem(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Material backend (classical or surrogate).
    #[arg(long)]
    backend: Option<String>,
    /// Surrogate weight file.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Dataset file read by `train`.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, action): (&'static str, Common, fn(&Run) -> anyhow::Result<Vec<String>>) = match cli.command {
        Command::Generate(c) => ("generate", c, commands::generate),
        Command::Train(c) => ("train", c, commands::train),
        Command::MpDrive(c) => ("mp-drive", c, commands::mp_drive),
        Command::Bench(c) => ("bench", c, commands::bench_cmd),
        Command::Fem(c) => ("fem", c, commands::fem),
    };
    let flags = Overrides {
        seed: common.seed,
        out: common.out,
        backend: common.backend,
        weights: common.weights,
        dataset: common.dataset,
    };
    let result = RunConfig::resolve(common.config.as_deref(), &flags).and_then(|cfg| {
        let run = Run::new(cfg, name);
        eprintln!("# resolved configuration (sha256 {})\n{}", run.fingerprint, run.cfg.to_toml());
        action(&run)
    });
    match result {
        Ok(report) => {
            for line in report {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
