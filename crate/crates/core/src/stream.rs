//! Sliding-window engine.
//!
//! The window of `t` rows lives in a ring buffer. Each step takes a batch of
//! `t_up` new rows, pops the `t_up` oldest rows, updates the raw moments with
//! both batches, converts moments to cumulants and emits them for the new
//! window.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cumulants::{moms2cums, CumulantSeries};
use crate::data::{DataBatch, DataError};
use crate::gauge::{GaugeError, WindowReport};
use crate::moments::{moment_series_counted, MomentSeries, MomentsError, RowCounter};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream configuration: {0}")]
    Config(String),
    #[error("batch shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error("source failed: {0}")]
    Source(String),
    #[error("sink failed: {0}")]
    Sink(String),
    #[error("stream ended before the first window was filled")]
    NoPrimeBatch,
}

pub const DEFAULT_RESYNC_EVERY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Number of variables.
    pub n: usize,
    /// Highest cumulant order.
    pub d: usize,
    /// Window length.
    pub t: usize,
    /// Rows per update batch.
    pub t_up: usize,
    /// Block size of the tensor storage.
    pub b: usize,
    /// Recompute moments from the buffer every this many steps; 0 disables.
    pub resync_every: usize,
}

impl StreamConfig {
    pub fn new(n: usize, d: usize, t: usize, t_up: usize, b: usize) -> Result<Self, StreamError> {
        let cfg = StreamConfig { n, d, t, t_up, b, resync_every: DEFAULT_RESYNC_EVERY };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_resync(mut self, every: usize) -> Self {
        self.resync_every = every;
        self
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        let fail = |m: String| Err(StreamError::Config(m));
        if self.n == 0 {
            return fail("n must be positive".into());
        }
        if self.d < 2 {
            return fail(format!("order d={} must be at least 2", self.d));
        }
        if self.t_up == 0 || self.t_up > self.t {
            return fail(format!("update size t_up={} must lie in 1..=t={}", self.t_up, self.t));
        }
        if self.b == 0 || self.b > self.n {
            return fail(format!("block size b={} must lie in 1..=n={}", self.b, self.n));
        }
        Ok(())
    }
}

/// Ring buffer over the `t` rows of the current window.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    // row slot of the oldest sample
    head: usize,
}

impl WindowBuffer {
    pub fn new(initial: &DataBatch) -> Self {
        WindowBuffer {
            rows: initial.rows(),
            cols: initial.cols(),
            data: initial.as_slice().to_vec(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    fn copy_rows(&self, start: usize, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count * self.cols);
        for k in 0..count {
            let slot = (start + k) % self.rows;
            out.extend_from_slice(&self.data[slot * self.cols..(slot + 1) * self.cols]);
        }
        out
    }

    /// The `k` oldest rows in arrival order.
    pub fn oldest(&self, k: usize) -> Result<DataBatch, DataError> {
        DataBatch::new(k, self.cols, self.copy_rows(self.head, k.min(self.rows)))
    }

    /// Replaces the oldest `incoming.rows()` rows with `incoming` and returns
    /// the rows that left the window, oldest first.
    pub fn push_pop(&mut self, incoming: &DataBatch) -> Result<DataBatch, DataError> {
        let k = incoming.rows();
        let outgoing = self.oldest(k)?;
        for r in 0..k {
            let slot = (self.head + r) % self.rows;
            self.data[slot * self.cols..(slot + 1) * self.cols].copy_from_slice(incoming.row(r));
        }
        self.head = (self.head + k) % self.rows;
        Ok(outgoing)
    }

    /// Window contents in arrival order.
    pub fn contents(&self) -> DataBatch {
        DataBatch::new(self.rows, self.cols, self.copy_rows(self.head, self.rows))
            .expect("buffer is never empty")
    }
}

/// Wall-clock split of one window step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub update: Duration,
    pub moms2cums: Duration,
    pub gauge: Duration,
}

impl StepTimings {
    pub fn total(&self) -> Duration {
        self.update + self.moms2cums + self.gauge
    }
}

/// Streaming state of one data stream.
#[derive(Debug)]
pub struct WindowState {
    config: StreamConfig,
    buffer: WindowBuffer,
    moments: MomentSeries,
    window_index: usize,
    steps_since_resync: usize,
    rows_read: RowCounter,
    last_timings: StepTimings,
}

fn check_shape(x: &DataBatch, rows: usize, cols: usize) -> Result<(), StreamError> {
    if x.rows() != rows || x.cols() != cols {
        return Err(StreamError::Shape {
            rows: x.rows(),
            cols: x.cols(),
            expected_rows: rows,
            expected_cols: cols,
        });
    }
    Ok(())
}

impl WindowState {
    /// Fills the first window with exactly `t` rows and computes its moments.
    pub fn prime(config: StreamConfig, first: &DataBatch) -> Result<Self, StreamError> {
        config.validate()?;
        check_shape(first, config.t, config.n)?;
        let rows_read = RowCounter::new();
        let start = Instant::now();
        let moments = moment_series_counted(first, config.d, config.b, Some(&rows_read))?;
        Ok(WindowState {
            config,
            buffer: WindowBuffer::new(first),
            moments,
            window_index: 1,
            steps_since_resync: 0,
            rows_read,
            last_timings: StepTimings { update: start.elapsed(), ..Default::default() },
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn window_index(&self) -> usize {
        self.window_index
    }

    pub fn moments(&self) -> &MomentSeries {
        &self.moments
    }

    pub fn buffer(&self) -> &WindowBuffer {
        &self.buffer
    }

    /// Data rows read by the moment kernels since the counter was last reset.
    pub fn rows_read(&self) -> u64 {
        self.rows_read.get()
    }

    pub fn reset_rows_read(&self) -> u64 {
        self.rows_read.reset()
    }

    pub fn last_timings(&self) -> StepTimings {
        self.last_timings
    }

    /// Cumulants of the current window.
    pub fn cumulants(&self) -> CumulantSeries {
        moms2cums(&self.moments)
    }

    /// Advances the window by one batch of `t_up` rows and returns the
    /// cumulants of the new window.
    pub fn step(&mut self, incoming: &DataBatch) -> Result<CumulantSeries, StreamError> {
        check_shape(incoming, self.config.t_up, self.config.n)?;
        let start = Instant::now();
        let outgoing = self.buffer.push_pop(incoming)?;
        self.steps_since_resync += 1;
        if self.config.resync_every > 0 && self.steps_since_resync >= self.config.resync_every {
            self.resync()?;
        } else {
            self.moments.update(incoming, &outgoing, Some(&self.rows_read))?;
        }
        let update = start.elapsed();
        self.window_index += 1;

        let start = Instant::now();
        let cumulants = moms2cums(&self.moments);
        self.last_timings = StepTimings { update, moms2cums: start.elapsed(), gauge: Duration::ZERO };
        Ok(cumulants)
    }

    /// Recomputes the moments from the buffered window, discarding any drift
    /// accumulated by updates.
    pub fn resync(&mut self) -> Result<(), StreamError> {
        self.moments = moment_series_counted(
            &self.buffer.contents(),
            self.config.d,
            self.config.b,
            Some(&self.rows_read),
        )?;
        self.steps_since_resync = 0;
        Ok(())
    }

    /// Report for the given cumulants, recording the gauge time.
    pub fn report(&mut self, cumulants: &CumulantSeries) -> Result<WindowReport, StreamError> {
        let start = Instant::now();
        let report = WindowReport::from_cumulants(self.window_index, cumulants)?;
        self.last_timings.gauge = start.elapsed();
        Ok(report)
    }
}

/// Totals returned by [`run`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub windows: usize,
    pub rows: usize,
    pub discarded_rows: usize,
    pub timings: Vec<StepTimings>,
}

/// Drives a stream: the first batch primes a window of `t` rows, every
/// following batch of `t_up` rows advances it. One report is passed to `sink`
/// per window, including the primed one. A short final batch is dropped with
/// a warning; a short batch anywhere else is an error.
pub fn run<I, E, S>(config: StreamConfig, source: I, mut sink: S) -> Result<RunSummary, StreamError>
where
    I: IntoIterator<Item = Result<DataBatch, E>>,
    E: std::fmt::Display,
    S: FnMut(&WindowReport, &CumulantSeries) -> Result<(), StreamError>,
{
    let mut source = source.into_iter().peekable();
    let first = match source.next() {
        Some(b) => b.map_err(|e| StreamError::Source(e.to_string()))?,
        None => return Err(StreamError::NoPrimeBatch),
    };
    let mut state = WindowState::prime(config, &first)?;
    let mut summary = RunSummary { rows: first.rows(), ..Default::default() };

    let cumulants = state.cumulants();
    let report = state.report(&cumulants)?;
    sink(&report, &cumulants)?;
    summary.windows += 1;
    summary.timings.push(state.last_timings());

    while let Some(batch) = source.next() {
        let batch = batch.map_err(|e| StreamError::Source(e.to_string()))?;
        if batch.rows() < config.t_up && batch.cols() == config.n && source.peek().is_none() {
            log::warn!(
                "discarding final partial batch of {} rows (update size {})",
                batch.rows(),
                config.t_up
            );
            summary.discarded_rows += batch.rows();
            break;
        }
        let cumulants = state.step(&batch)?;
        let report = state.report(&cumulants)?;
        sink(&report, &cumulants)?;
        summary.windows += 1;
        summary.rows += batch.rows();
        summary.timings.push(state.last_timings());
    }
    Ok(summary)
}
