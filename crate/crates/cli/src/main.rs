use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavobs::{Command, ConfigFile, Overrides, RunConfig};

/// Observability constants and boundary controls for spectral
/// discretisations of the 1D wave equation.
#[derive(Debug, Parser)]
#[command(name = "wavobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (1 runs sequentially).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Polynomial degrees, comma separated and ascending.
    #[arg(long = "N", global = true, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<usize>>,
    /// Control horizon.
    #[arg(long = "T", global = true)]
    t: Option<f64>,
    /// Nitsche penalty for pipelines that do not name one.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Filter `name[:p[:alpha]]`; repeatable.
    #[arg(long = "filter", global = true)]
    filters: Vec<String>,
    /// Pipeline, e.g. `mixed` or `nitsche-sym:0.8`; repeatable.
    #[arg(long = "pipeline", global = true)]
    pipelines: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Discrete frequencies of the classical scheme.
    Spectrum,
    /// Observability constants per pipeline and degree.
    Constants,
    /// HUM controls for the closed-form benchmark.
    Control,
    /// Filter profiles on a uniform grid.
    Filters,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Constants => Command::Constants,
        Cmd::Control => Command::Control,
        Cmd::Filters => Command::Filters,
    };
    let flags = Overrides {
        out: cli.out,
        workers: cli.workers,
        n: cli.n,
        t: cli.t,
        gamma: cli.gamma,
        filters: cli.filters,
        pipelines: cli.pipelines,
    };
    let result = cli
        .config
        .as_deref()
        .map(ConfigFile::load)
        .unwrap_or_else(|| Ok(ConfigFile::default()))
        .and_then(|file| RunConfig::resolve(command, &file, &flags))
        .and_then(|cfg| wavobs::execute(&cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("wavobs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
