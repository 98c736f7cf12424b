//! `bench`: for every point of a parameter grid, times update steps of the
//! streaming engine against recomputing all cumulants of the same window.
//!
//! Both paths go through the library calls used by `process`: the update path
//! is `WindowState::step` plus the window report, the recalculation path is
//! `cumulant_series` plus the same report.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Args;
use cumstream::copula::{GenConfig, StreamGenerator};
use cumstream::cumulants::cumulant_series;
use cumstream::gauge::{predicted_speedup, WindowReport};
use cumstream::stream::{StreamConfig, WindowState};
use serde::{Deserialize, Serialize};

use crate::manifest::{frequency, median_secs, write_json};
use crate::{resolve_workers, with_workers, Failure};

/// Fewest timed steps per grid point.
pub const MIN_STEPS: usize = 5;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Numbers of variables.
    #[arg(long = "n", value_delimiter = ',', default_value = "30")]
    pub n: Vec<usize>,
    /// Highest cumulant orders.
    #[arg(long, short = 'd', value_delimiter = ',', default_value = "4")]
    pub order: Vec<usize>,
    /// Block sizes.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub block: Vec<usize>,
    /// Window lengths.
    #[arg(long, value_delimiter = ',', default_value = "100000")]
    pub window: Vec<usize>,
    /// Update sizes.
    #[arg(long, value_delimiter = ',', default_value = "5000,2500")]
    pub update: Vec<usize>,
    /// Timed update steps per point (at least 5).
    #[arg(long, default_value_t = MIN_STEPS)]
    pub steps: usize,
    /// Untimed steps before timing starts.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Timed full recalculations per point.
    #[arg(long, default_value_t = 3)]
    pub recalc_reps: usize,
    /// Skip points whose top-order tensor exceeds this many elements (n^d/d!).
    #[arg(long, default_value_t = 2e8)]
    pub budget: f64,
    /// Seed of the synthetic Gaussian data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest output; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads; overridden by CUMSTREAM_WORKERS.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub t: usize,
    pub t_up: usize,
}

/// Measurements at one grid point. Times are medians in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub point: GridPoint,
    pub steps: usize,
    pub step_s: f64,
    pub update_s: f64,
    pub moms2cums_s: f64,
    pub gauge_s: f64,
    pub recalc_s: f64,
    pub measured_speedup: f64,
    pub predicted_speedup: f64,
    /// Highest sustainable input rate, `t_up / step_s` rows per second.
    pub frequency_hz: Option<f64>,
    /// Data rows read by the moment kernels in each timed step.
    pub rows_read_per_step: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BenchOutcome {
    Measured(BenchRecord),
    Skipped { point: GridPoint, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub workers: usize,
    pub parallel: bool,
    pub seed: u64,
    pub outcomes: Vec<BenchOutcome>,
}

/// Timing options shared by all grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub steps: usize,
    pub warmup: usize,
    pub recalc_reps: usize,
    pub budget: f64,
    pub seed: u64,
}

impl BenchArgs {
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &d in &self.order {
                for &b in &self.block {
                    for &t in &self.window {
                        for &t_up in &self.update {
                            out.push(GridPoint { n, d, b, t, t_up });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn options(&self) -> Result<BenchOptions, Failure> {
        if self.steps < MIN_STEPS {
            return Err(Failure::usage(format!("--steps must be at least {MIN_STEPS}")));
        }
        if self.recalc_reps == 0 {
            return Err(Failure::usage("--recalc-reps must be positive"));
        }
        Ok(BenchOptions {
            steps: self.steps,
            warmup: self.warmup,
            recalc_reps: self.recalc_reps,
            budget: self.budget,
            seed: self.seed,
        })
    }
}

/// Estimated element count `n^d / d!` of the top-order tensor.
pub fn element_estimate(n: usize, d: usize) -> f64 {
    (1..=d).map(|k| n as f64 / k as f64).product()
}

/// Measures one grid point, or explains why it was skipped.
pub fn bench_point(p: GridPoint, opts: &BenchOptions) -> BenchOutcome {
    let skip = |reason: String| BenchOutcome::Skipped { point: p, reason };
    let estimate = element_estimate(p.n, p.d);
    if estimate > opts.budget {
        return skip(format!("estimated {estimate:.3e} elements exceed the budget of {:.3e}", opts.budget));
    }
    let config = match StreamConfig::new(p.n, p.d, p.t, p.t_up, p.b) {
        Ok(c) => c.with_resync(0),
        Err(e) => return skip(e.to_string()),
    };
    match measure(config, opts) {
        Ok(r) => BenchOutcome::Measured(r),
        Err(e) => skip(format!("{e:#}")),
    }
}

fn measure(config: StreamConfig, opts: &BenchOptions) -> anyhow::Result<BenchRecord> {
    let StreamConfig { n, d, t, t_up, b, .. } = config;
    let total_steps = opts.warmup + opts.steps;
    let generator = StreamGenerator::new(GenConfig::new(n, t, t_up, 1, opts.seed))?;
    let data = generator.gaussian_batch(0, t + total_steps * t_up);

    let mut state = WindowState::prime(config, &data.slice_rows(0, t)?)?;
    let mut step = Vec::with_capacity(opts.steps);
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    let mut rows_read = Vec::with_capacity(opts.steps);
    for k in 0..total_steps {
        let lo = t + k * t_up;
        let batch = data.slice_rows(lo, lo + t_up)?;
        state.reset_rows_read();
        let start = Instant::now();
        let cumulants = state.step(&batch)?;
        state.report(&cumulants)?;
        let elapsed = start.elapsed();
        if k >= opts.warmup {
            let timings = state.last_timings();
            step.push(elapsed);
            parts[0].push(timings.update);
            parts[1].push(timings.moms2cums);
            parts[2].push(timings.gauge);
            rows_read.push(state.rows_read());
        }
    }

    let window = state.buffer().contents();
    let mut recalc: Vec<Duration> = Vec::with_capacity(opts.recalc_reps);
    for _ in 0..opts.recalc_reps {
        let start = Instant::now();
        let c = cumulant_series(&window, d, b)?;
        WindowReport::from_cumulants(state.window_index(), &c)?;
        recalc.push(start.elapsed());
    }

    let step_s = median_secs(&step);
    let recalc_s = median_secs(&recalc);
    Ok(BenchRecord {
        point: GridPoint { n, d, b, t, t_up },
        steps: opts.steps,
        step_s,
        update_s: median_secs(&parts[0]),
        moms2cums_s: median_secs(&parts[1]),
        gauge_s: median_secs(&parts[2]),
        recalc_s,
        measured_speedup: recalc_s / step_s,
        predicted_speedup: predicted_speedup(t, t_up, d),
        frequency_hz: frequency(t_up, step_s),
        rows_read_per_step: rows_read,
    })
}

/// Runs the whole grid on `workers` threads.
pub fn run_grid(grid: &[GridPoint], opts: &BenchOptions, workers: usize) -> Result<BenchManifest, Failure> {
    let outcomes = with_workers(workers, || {
        grid.iter()
            .map(|&p| {
                let outcome = bench_point(p, opts);
                match &outcome {
                    BenchOutcome::Measured(r) => log::info!(
                        "{:?}: step {:.4}s, recalc {:.4}s, speedup {:.2} (predicted {:.2})",
                        p,
                        r.step_s,
                        r.recalc_s,
                        r.measured_speedup,
                        r.predicted_speedup
                    ),
                    BenchOutcome::Skipped { reason, .. } => log::warn!("{p:?} skipped: {reason}"),
                }
                outcome
            })
            .collect()
    })?;
    Ok(BenchManifest { workers, parallel: crate::parallel_enabled(), seed: opts.seed, outcomes })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchManifest, Failure> {
    let opts = args.options()?;
    let workers = resolve_workers(args.workers)?;
    let manifest = run_grid(&args.grid(), &opts, workers)?;
    match &args.output {
        Some(path) => write_json(path, &manifest).map_err(Failure::data)?,
        None => println!("{}", serde_json::to_string_pretty(&manifest).map_err(Failure::data)?),
    }
    Ok(manifest)
}
