//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, manifest, trace
//! files), 2 failure while running.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gambleta::experiment::{self, BoundsGrid};
use gambleta::manifest::{RunManifest, Source};
use gambleta::Error;

#[derive(Debug, Parser)]
#[command(name = "gambleta", version, about = "Bandit-driven time allocation for algorithm portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a manifest.
    Run {
        manifest: PathBuf,
        /// Overrides the manifest's output directory.
        #[arg(long, env = "GAMBLETA_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Tabulate the regret bounds over a grid (comma-separated lists).
    Bounds {
        #[arg(long = "n-arms", value_delimiter = ',')]
        n_arms: Vec<usize>,
        #[arg(long = "horizon", value_delimiter = ',')]
        horizons: Vec<usize>,
        #[arg(long = "loss-bound", value_delimiter = ',')]
        loss_bounds: Vec<f64>,
        #[arg(long = "best-loss", value_delimiter = ',')]
        best_losses: Vec<f64>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a manifest on a trace file instead of its own instance source.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, env = "GAMBLETA_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Write a manifest's instance stream with its ground-truth runtimes.
    ExportTraces {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Manifest { .. } | Error::Format(_) | Error::Csv(_) => {
                Failure::Invalid(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<RunManifest, Failure> {
    RunManifest::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::Invalid(format!("{}: {io}", path.display())),
        other => match Failure::from(other) {
            Failure::Invalid(msg) => Failure::Invalid(format!("{}: {msg}", path.display())),
            f => f,
        },
    })
}

fn run(mut manifest: RunManifest, output_dir: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(dir) = output_dir {
        manifest.output_dir = dir;
    }
    let outcome = experiment::run_manifest(&manifest)?;
    let mut stdout = io::stdout().lock();
    for path in &outcome.files {
        let _ = writeln!(stdout, "wrote {}", path.display());
    }
    for s in &outcome.finals {
        let band = s
            .band
            .map_or_else(String::new, |(lo, hi)| format!(" (95% band {:.1}% to {:.1}%)", lo * 100.0, hi * 100.0));
        let _ = writeln!(stdout, "final overhead {:<12} {:.1}%{band}", s.series, s.mean * 100.0);
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { manifest, output_dir } => run(load(&manifest)?, output_dir),
        Command::Replay {
            manifest,
            trace,
            output_dir,
        } => {
            let mut m = load(&manifest)?;
            if matches!(m.source, Source::External { .. }) {
                return Err(Failure::Invalid("external manifests cannot be replayed".into()));
            }
            m.source = Source::Trace(trace);
            run(m, output_dir)
        }
        Command::ExportTraces { manifest, out } => {
            let n = experiment::export_traces(&load(&manifest)?, &out)?;
            println!("wrote {n} instances to {}", out.display());
            Ok(())
        }
        Command::Bounds {
            n_arms,
            horizons,
            loss_bounds,
            best_losses,
            out,
        } => {
            let grid = BoundsGrid {
                n_arms,
                horizons,
                loss_bounds,
                best_losses,
            };
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)
                        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
                    experiment::write_bounds_table(io::BufWriter::new(file), &grid)?;
                }
                None => {
                    experiment::write_bounds_table(io::stdout().lock(), &grid)?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
