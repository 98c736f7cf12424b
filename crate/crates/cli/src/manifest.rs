//! Run metadata written next to the reports.

use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use cumstream::stream::{RunSummary, StepTimings, StreamConfig};
use serde::{Deserialize, Serialize};

/// Timings of one window in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTiming {
    pub window_index: usize,
    pub update_s: f64,
    pub moms2cums_s: f64,
    pub gauge_s: f64,
    pub total_s: f64,
}

impl WindowTiming {
    pub fn new(window_index: usize, t: &StepTimings) -> Self {
        WindowTiming {
            window_index,
            update_s: t.update.as_secs_f64(),
            moms2cums_s: t.moms2cums.as_secs_f64(),
            gauge_s: t.gauge.as_secs_f64(),
            total_s: t.total().as_secs_f64(),
        }
    }
}

/// Manifest of a `process` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: StreamConfig,
    pub workers: usize,
    pub parallel: bool,
    pub windows: usize,
    pub rows_processed: usize,
    pub discarded_rows: usize,
    /// Window 1 is the priming pass, the rest are update steps.
    pub timings: Vec<WindowTiming>,
    /// Mean wall time of an update step; absent when no step ran.
    pub mean_step_s: Option<f64>,
    /// `t_up / mean_step_s`, the highest input rate the run could sustain.
    pub frequency_hz: Option<f64>,
}

impl RunManifest {
    pub fn new(config: StreamConfig, workers: usize, summary: &RunSummary) -> Self {
        let timings: Vec<WindowTiming> = summary
            .timings
            .iter()
            .enumerate()
            .map(|(k, t)| WindowTiming::new(k + 1, t))
            .collect();
        let steps: Vec<f64> = timings.iter().skip(1).map(|t| t.total_s).collect();
        let mean_step_s = (!steps.is_empty()).then(|| steps.iter().sum::<f64>() / steps.len() as f64);
        RunManifest {
            config,
            workers,
            parallel: crate::parallel_enabled(),
            windows: summary.windows,
            rows_processed: summary.rows,
            discarded_rows: summary.discarded_rows,
            timings,
            mean_step_s,
            frequency_hz: mean_step_s.and_then(|s| frequency(config.t_up, s)),
        }
    }
}

/// Rows per second for a step of `t_up` rows taking `seconds`.
pub fn frequency(t_up: usize, seconds: f64) -> Option<f64> {
    let f = t_up as f64 / seconds;
    f.is_finite().then_some(f)
}

/// Median of the given durations in seconds.
pub fn median_secs(samples: &[Duration]) -> f64 {
    let mut v: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        len if len % 2 == 1 => v[len / 2],
        len => 0.5 * (v[len / 2 - 1] + v[len / 2]),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        let ms = |v: &[u64]| v.iter().map(|&m| Duration::from_millis(m)).collect::<Vec<_>>();
        assert_eq!(median_secs(&ms(&[5, 1, 3])), 0.003);
        assert_eq!(median_secs(&ms(&[4, 1, 3, 2])), 0.0025);
        assert!(median_secs(&[]).is_nan());
    }

    #[test]
    fn frequency_needs_positive_time() {
        assert_eq!(frequency(100, 0.5), Some(200.0));
        assert_eq!(frequency(100, 0.0), None);
    }

    #[test]
    fn manifest_skips_priming_pass_in_mean() {
        let cfg = StreamConfig::new(1, 2, 4, 2, 1).unwrap();
        let step = |ms| StepTimings { update: Duration::from_millis(ms), ..Default::default() };
        let summary = RunSummary { windows: 3, rows: 8, discarded_rows: 0, timings: vec![step(100), step(2), step(4)] };
        let m = RunManifest::new(cfg, 1, &summary);
        assert!((m.mean_step_s.unwrap() - 0.003).abs() < 1e-12);
        assert!((m.frequency_hz.unwrap() - 2.0 / 0.003).abs() < 1e-6);
        assert_eq!(m.timings[0].window_index, 1);
    }
}
