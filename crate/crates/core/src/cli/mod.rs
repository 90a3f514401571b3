//! Batch front end. Exit codes: 0 success, 1 validation failure, 2 runtime error.

pub mod commands;
pub mod config;
pub mod manifest;

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use manifest::RunManifest;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    /// Core errors raised while turning a config into a run description.
    pub fn from_core_config(e: crate::Error) -> Self {
        match e {
            crate::Error::Hypothesis(_) | crate::Error::InvalidArgument(_) => CliError::Validation(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "histwave", version, about = "Coupled waves with local past-history damping")]
struct Cli {
    /// TOML run configuration (a previous manifest.toml also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (defaults to the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for random initial data; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Check the standing hypotheses.
    Validate,
    /// Integrate in time and write energy.csv.
    Simulate,
    /// Resolvent norm along the imaginary axis; writes sweep.csv and envelope.csv.
    Sweep,
    /// Explicit resonant sequence; writes resonance.csv.
    Resonance,
    /// Rightmost eigenvalues of the discrete generator; writes spectrum.csv.
    Spectrum,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Resonance => "resonance",
            Command::Spectrum => "spectrum",
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, std::env::vars()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let mut config = parse_config(path, env)?;
    config.resolve(cli.seed);
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let seed = config.initial.seed.or(cli.seed).unwrap_or(0);
    let mut manifest = RunManifest::new(cli.command.name(), &config, seed, workers);
    let dir = match (&cli.out, cli.command) {
        (Some(d), _) => Some(d.clone()),
        (None, Command::Validate) => None,
        (None, _) => Some(PathBuf::from("histwave-out")),
    };
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", d.display())))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    // Sweeps parallelize over frequencies; dense kernels stay sequential so
    // output does not depend on the worker count.
    faer::set_global_parallelism(faer::Par::Seq);
    let start = Instant::now();
    let result = pool.install(|| match (cli.command, &dir) {
        (Command::Validate, _) => commands::validate(&config, &mut manifest),
        (Command::Simulate, Some(d)) => commands::simulate(&config, d, &mut manifest),
        (Command::Sweep, Some(d)) => commands::sweep(&config, d, &mut manifest),
        (Command::Resonance, Some(d)) => commands::resonance(&config, d, &mut manifest),
        (Command::Spectrum, Some(d)) => commands::spectrum(&config, d, &mut manifest),
        (_, None) => unreachable!("non-validate commands always have an output directory"),
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Some(d) = &dir {
        if result.is_ok() || cli.command == Command::Validate {
            manifest.write(d)?;
        }
    }
    if result.is_ok() {
        let summary = toml::to_string(&manifest.summary).unwrap_or_default();
        print!("{summary}");
        if let Some(d) = &dir {
            println!("wrote {} in {}", manifest.outputs.join(", "), d.display());
        }
    }
    result
}

