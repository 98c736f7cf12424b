//! `datagen`: writes the Gaussian-then-copula experiment stream as CSV, with
//! the generator configuration in a JSON sidecar.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use cumstream::copula::{GenConfig, StreamGenerator, DEFAULT_COPULA_DOF};

use crate::csvio::CsvSink;
use crate::manifest::write_json;
use crate::{resolve_workers, with_workers, Failure};

#[derive(Debug, Clone, Args)]
pub struct DatagenArgs {
    /// Number of variables.
    #[arg(long = "n")]
    pub n: usize,
    /// Rows of the initial Gaussian window.
    #[arg(long)]
    pub window: usize,
    /// Rows per copula update batch.
    #[arg(long)]
    pub update: usize,
    /// Number of windows; the stream has window + (windows - 1) * update rows.
    #[arg(long)]
    pub windows: usize,
    /// Degrees of freedom of the t copula.
    #[arg(long, default_value_t = DEFAULT_COPULA_DOF)]
    pub dof: f64,
    /// Random seed; also selects the correlation matrix.
    #[arg(long)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long)]
    pub output: PathBuf,
    /// Generator configuration file; defaults to the output path with a
    /// `.config.json` extension.
    #[arg(long)]
    pub config_out: Option<PathBuf>,
    /// Write an `x0,x1,...` header line.
    #[arg(long)]
    pub header: bool,
    /// Worker threads; overridden by CUMSTREAM_WORKERS.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl DatagenArgs {
    pub fn gen_config(&self) -> Result<GenConfig, Failure> {
        if self.n == 0 || self.window == 0 || self.update == 0 || self.windows == 0 {
            return Err(Failure::usage("--n, --window, --update and --windows must be positive"));
        }
        if self.update > self.window {
            return Err(Failure::usage(format!(
                "--update {} exceeds --window {}",
                self.update, self.window
            )));
        }
        let mut cfg = GenConfig::new(self.n, self.window, self.update, self.windows, self.seed);
        cfg.copula_dof = self.dof;
        Ok(cfg)
    }

    pub fn config_path(&self) -> PathBuf {
        self.config_out.clone().unwrap_or_else(|| self.output.with_extension("config.json"))
    }
}

/// Writes the whole experiment stream of `generator` to `path`.
pub fn write_stream(generator: &StreamGenerator, path: &Path, header: bool) -> anyhow::Result<usize> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = CsvSink::new(BufWriter::new(file), header.then_some(generator.config().n))?;
    let mut rows = 0;
    for batch in generator.experiment_stream() {
        sink.write_batch(&batch)?;
        rows += batch.rows();
    }
    sink.finish()?;
    Ok(rows)
}

pub fn cmd_datagen(args: &DatagenArgs) -> Result<(), Failure> {
    let cfg = args.gen_config()?;
    let workers = resolve_workers(args.workers)?;
    let generator = StreamGenerator::new(cfg.clone()).map_err(|e| Failure::usage(e.to_string()))?;
    let rows = with_workers(workers, || write_stream(&generator, &args.output, args.header))?
        .map_err(Failure::data)?;
    write_json(&args.config_path(), &cfg).map_err(Failure::data)?;
    log::info!("wrote {rows} rows to {}", args.output.display());
    Ok(())
}
