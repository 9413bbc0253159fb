//! The `gso` command line: artifact management and the evaluation pipeline.
//!
//! Exit codes: 0 on success, 1 on usage/configuration errors, 2 on data or
//! format errors.

mod commands;
mod config;

use std::io::Write;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gso", version, about = "OOD detection from low-dimensional parameter gradients")]
pub struct Cli {
    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Emit one JSON log record per line on stderr
    #[arg(long, global = true)]
    pub json_logs: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic ID/OOD benchmark into --out DIR
    Synth(Overrides),
    /// Train the classifier on --train (or --data-dir) into --out
    Train(Overrides),
    /// Fit a PCA or class-mean gradient subspace for --model on --train
    FitSubspace(Overrides),
    /// Project --data through --model and --subspace into an embedding file
    Embed(Overrides),
    /// Fit --detector on labeled --embeddings
    FitDetector(Overrides),
    /// Score --embeddings with --detector-file into a score stream file
    Score(Overrides),
    /// Run the full pipeline and write report.json, report.csv and histograms to --out DIR
    Eval(Overrides),
    /// Write the eigenvalue spectrum of a PCA --subspace as CSV
    Spectrum(Overrides),
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Command::Synth(o)
            | Command::Train(o)
            | Command::FitSubspace(o)
            | Command::Embed(o)
            | Command::FitDetector(o)
            | Command::Score(o)
            | Command::Eval(o)
            | Command::Spectrum(o) => o,
        }
    }
}

struct Logger {
    json: bool,
}

impl log::Log for Logger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = if self.json {
            serde_json::json!({
                "level": record.level().as_str().to_lowercase(),
                "target": record.target(),
                "message": record.args().to_string(),
            })
            .to_string()
        } else {
            format!("[{}] {}", record.level().as_str().to_lowercase(), record.args())
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }

    fn flush(&self) {}
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let logger = Box::new(Logger { json: cli.json_logs });
    if log::set_logger(Box::leak(logger)).is_ok() {
        log::set_max_level(log::LevelFilter::Info);
    }
    let result = (|| {
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(crate::Error::usage("--threads must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| crate::Error::usage(format!("cannot size the thread pool: {e}")))?;
        }
        let config = RunConfig::resolve(cli.command.overrides())?;
        commands::dispatch(&cli.command, &config)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            if cli.json_logs {
                log::error!("{e}");
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

/// Parses `std::env::args` and runs; clap usage errors exit with 1.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
