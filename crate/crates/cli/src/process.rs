//! `process`: CSV in, one JSON report line per window out.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use cumstream::cumulants::CumulantSeries;
use cumstream::stream::{run, RunSummary, StreamConfig, StreamError, DEFAULT_RESYNC_EVERY};
use cumstream::symten::SymTensorDump;
use serde::{Deserialize, Serialize};

use crate::csvio::CsvBatches;
use crate::manifest::{write_json, RunManifest};
use crate::{resolve_workers, with_workers, Failure};

#[derive(Debug, Clone, Args)]
pub struct ProcessArgs {
    /// Input CSV file, `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// The input has a header line.
    #[arg(long)]
    pub header: bool,
    /// Number of variables (CSV columns).
    #[arg(long = "n")]
    pub n: usize,
    /// Highest cumulant order.
    #[arg(long, short = 'd', default_value_t = 4)]
    pub order: usize,
    /// Window length in rows.
    #[arg(long)]
    pub window: usize,
    /// Rows per update.
    #[arg(long)]
    pub update: usize,
    /// Block size of the tensor storage; defaults to min(2, n).
    #[arg(long)]
    pub block: Option<usize>,
    /// Report output, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    /// Write every window's cumulant tensors to this directory.
    #[arg(long)]
    pub dump_cumulants: Option<PathBuf>,
    /// Write a run manifest with timings to this file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Recompute moments from the window every this many steps; 0 disables.
    #[arg(long, default_value_t = DEFAULT_RESYNC_EVERY)]
    pub resync_every: usize,
    /// Worker threads; overridden by CUMSTREAM_WORKERS.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ProcessArgs {
    pub fn stream_config(&self) -> Result<StreamConfig, Failure> {
        let b = self.block.unwrap_or(self.n.clamp(1, 2));
        StreamConfig::new(self.n, self.order, self.window, self.update, b)
            .map(|c| c.with_resync(self.resync_every))
            .map_err(|e| Failure::usage(e.to_string()))
    }
}

/// Cumulant tensors of one window as written by `--dump-cumulants`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantDump {
    pub window_index: usize,
    /// Orders `1..=d` in increasing order.
    pub tensors: Vec<SymTensorDump>,
}

impl CumulantDump {
    pub fn new(window_index: usize, c: &CumulantSeries) -> Self {
        CumulantDump { window_index, tensors: c.tensors().iter().map(|t| t.to_dump()).collect() }
    }
}

/// File name of a window's dump inside the dump directory.
pub fn dump_file_name(window_index: usize) -> String {
    format!("window_{window_index:06}.json")
}

/// Runs the stream engine over CSV `input`, writing report lines to `out`.
pub fn process_stream<R: Read, W: Write>(
    config: StreamConfig,
    input: R,
    header: bool,
    out: &mut W,
    dump_dir: Option<&Path>,
) -> Result<RunSummary, Failure> {
    let batches = CsvBatches::new(input, header, config.n, config.t, config.t_up);
    let summary = run(config, batches, |report, cumulants| {
        writeln!(out, "{}", report.to_json_line()).map_err(|e| StreamError::Sink(e.to_string()))?;
        if let Some(dir) = dump_dir {
            let path = dir.join(dump_file_name(report.window_index));
            write_json(&path, &CumulantDump::new(report.window_index, cumulants))
                .map_err(|e| StreamError::Sink(format!("{e:#}")))?;
        }
        Ok(())
    })
    .map_err(|e| Failure::data(anyhow::Error::new(e).context("stream processing failed")))?;
    out.flush().map_err(Failure::data)?;
    if summary.discarded_rows > 0 {
        log::warn!("{} trailing rows did not fill an update and were ignored", summary.discarded_rows);
    }
    Ok(summary)
}

pub fn cmd_process(args: &ProcessArgs) -> Result<RunManifest, Failure> {
    let config = args.stream_config()?;
    let workers = resolve_workers(args.workers)?;
    let input: Box<dyn Read + Send> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        let f = File::open(&args.input)
            .with_context(|| format!("opening {}", args.input.display()))
            .map_err(Failure::data)?;
        Box::new(BufReader::new(f))
    };
    let mut out: Box<dyn Write + Send> = if args.output.as_os_str() == "-" {
        Box::new(BufWriter::new(io::stdout()))
    } else {
        let f = File::create(&args.output)
            .with_context(|| format!("creating {}", args.output.display()))
            .map_err(Failure::data)?;
        Box::new(BufWriter::new(f))
    };
    if let Some(dir) = &args.dump_cumulants {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::data)?;
    }
    let dump_dir = args.dump_cumulants.as_deref();
    let summary =
        with_workers(workers, move || process_stream(config, input, args.header, &mut out, dump_dir))??;
    let manifest = RunManifest::new(config, workers, &summary);
    if let Some(path) = &args.manifest {
        write_json(path, &manifest).map_err(Failure::data)?;
    }
    Ok(manifest)
}
