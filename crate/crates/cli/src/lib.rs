//! Command-line frontend for `cumstream`: stream processing of CSV input,
//! synthetic stream generation and the update-versus-recalculation benchmark.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

pub mod bench;
pub mod csvio;
pub mod datagen;
pub mod manifest;
pub mod process;

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};

pub use bench::{cmd_bench, BenchArgs};
pub use datagen::{cmd_datagen, DatagenArgs};
pub use process::{cmd_process, ProcessArgs};

/// Environment variable that overrides `--workers`.
pub const WORKERS_ENV: &str = "CUMSTREAM_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cumstream", version, about = "Sliding-window higher-order cumulants of data streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a CSV through the sliding window and emit one JSON report per window.
    Process(ProcessArgs),
    /// Write a synthetic Gaussian-then-copula stream as CSV.
    Datagen(DatagenArgs),
    /// Time update steps against full recalculation over a parameter grid.
    Bench(BenchArgs),
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        Failure::Data(err.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Data(err) => write!(f, "error: {err:#}"),
        }
    }
}

impl std::error::Error for Failure {}

/// Worker count: the environment variable wins over the flag, the flag over
/// the number of physical cores.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, Failure> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::usage(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
        Err(_) => flag.unwrap_or_else(num_cpus::get_physical),
    };
    if workers == 0 {
        return Err(Failure::usage("worker count must be positive"));
    }
    Ok(workers)
}

/// Whether the engine was built with the rayon backend.
pub fn parallel_enabled() -> bool {
    cumstream::par::is_parallel()
}

/// Runs `f` on a pool of `workers` threads. Without the parallel feature the
/// closure runs on the calling thread.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Failure::data(anyhow::anyhow!("cannot start {workers} workers: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Process(a) => cmd_process(a).map(|_| ()),
        Command::Datagen(a) => cmd_datagen(a),
        Command::Bench(a) => cmd_bench(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
