//! Statistics derived from cumulant tensors: norms, the non-Gaussianity gauge
//! `nu_d = ||C_d||_2 / ||C_2||_2^(d/2)`, univariate skewness and kurtosis
//! extremes, estimation error bounds and cost predictors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cumulants::CumulantSeries;
use crate::data::DataBatch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaugeError {
    #[error("nu is defined for orders above 2, got {0}")]
    OrderTooLow(usize),
    #[error("cumulant of order {0} is not available")]
    MissingOrder(usize),
    #[error("second cumulant has zero norm; the data are degenerate")]
    Degenerate,
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("at least 4 samples are needed, got {0}")]
    TooFewSamples(usize),
}

/// Standardized univariate statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Univariate {
    Skewness,
    /// Excess kurtosis, zero for a Gaussian.
    Kurtosis,
}

/// `||C_order||_2 / ||C_2||_2^(order/2)`.
pub fn nu(c: &CumulantSeries, order: usize) -> Result<f64, GaugeError> {
    if order <= 2 {
        return Err(GaugeError::OrderTooLow(order));
    }
    let c2 = c.get(2).ok_or(GaugeError::MissingOrder(2))?;
    let cd = c.get(order).ok_or(GaugeError::MissingOrder(order))?;
    let denom = c2.norm();
    if denom == 0.0 {
        return Err(GaugeError::Degenerate);
    }
    Ok(cd.norm() / denom.powf(order as f64 / 2.0))
}

fn standardized(kappa: [f64; 3], kind: Univariate) -> f64 {
    let [k2, k3, k4] = kappa;
    match kind {
        Univariate::Skewness => k3 / k2.powf(1.5),
        Univariate::Kurtosis => k4 / (k2 * k2),
    }
}

/// Largest absolute per-column skewness or excess kurtosis, computed from the
/// raw moments of each column.
pub fn max_abs_univariate(x: &DataBatch, kind: Univariate) -> Result<f64, GaugeError> {
    if x.rows() < 4 {
        return Err(GaugeError::TooFewSamples(x.rows()));
    }
    let t = x.rows() as f64;
    let mut best: f64 = 0.0;
    for j in 0..x.cols() {
        let mut m = [0.0f64; 4];
        for l in 0..x.rows() {
            let v = x.row(l)[j];
            let v2 = v * v;
            m[0] += v;
            m[1] += v2;
            m[2] += v2 * v;
            m[3] += v2 * v2;
        }
        let [m1, m2, m3, m4] = m.map(|s| s / t);
        let k2 = m2 - m1 * m1;
        if k2 <= 0.0 {
            return Err(GaugeError::ZeroVariance(j));
        }
        let k3 = m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3);
        let k4 = m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4);
        best = best.max(standardized([k2, k3, k4], kind).abs());
    }
    Ok(best)
}

/// Same statistic read off the super-diagonal of the cumulant tensors.
/// `None` when the series does not reach the needed order.
pub fn max_abs_univariate_from_cumulants(
    c: &CumulantSeries,
    kind: Univariate,
) -> Result<Option<f64>, GaugeError> {
    let order = match kind {
        Univariate::Skewness => 3,
        Univariate::Kurtosis => 4,
    };
    let (Some(c2), Some(cq)) = (c.get(2), c.get(order)) else {
        return Ok(None);
    };
    let mut best: f64 = 0.0;
    for j in 0..c2.dim() {
        let k2 = c2.get_sorted(&[j, j]);
        if k2 <= 0.0 {
            return Err(GaugeError::ZeroVariance(j));
        }
        let kq = cq.get_sorted(&vec![j; order]);
        let v = match kind {
            Univariate::Skewness => standardized([k2, kq, 0.0], kind),
            Univariate::Kurtosis => standardized([k2, 0.0, kq], kind),
        };
        best = best.max(v.abs());
    }
    Ok(Some(best))
}

/// Per-window summary emitted by the stream engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub norm_c1: f64,
    pub norm_c2: f64,
    /// `nu_d` for every order `3..=d`, keyed by order.
    pub nu: BTreeMap<usize, f64>,
    pub max_abs_skew: Option<f64>,
    pub max_abs_kurt: Option<f64>,
}

impl WindowReport {
    pub fn from_cumulants(window_index: usize, c: &CumulantSeries) -> Result<Self, GaugeError> {
        let norm_c1 = c.get(1).ok_or(GaugeError::MissingOrder(1))?.norm();
        let norm_c2 = c.get(2).ok_or(GaugeError::MissingOrder(2))?.norm();
        let mut nus = BTreeMap::new();
        for order in 3..=c.max_order() {
            nus.insert(order, nu(c, order)?);
        }
        Ok(WindowReport {
            window_index,
            norm_c1,
            norm_c2,
            nu: nus,
            max_abs_skew: max_abs_univariate_from_cumulants(c, Univariate::Skewness)?,
            max_abs_kurt: max_abs_univariate_from_cumulants(c, Univariate::Kurtosis)?,
        })
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Standard error bound `sqrt(m_2d / t)` of an estimated `d`-th moment.
pub fn moment_error_bound(t: usize, m2d: f64) -> f64 {
    (m2d / t as f64).sqrt()
}

/// Bound for standard Gaussian data, where `m_2d = (2d-1)!!`.
pub fn gaussian_moment_error_bound(d: usize, t: usize) -> f64 {
    moment_error_bound(t, double_factorial(2 * d - 1) as f64)
}

/// `k!!`, with `0!! = 1`.
pub fn double_factorial(k: usize) -> u128 {
    (1..=k as u128).rev().step_by(2).product()
}

/// Stirling number of the second kind `S(d, sigma)`.
pub fn stirling2(d: usize, sigma: usize) -> u128 {
    if sigma > d {
        return 0;
    }
    // row-by-row recurrence S(n,k) = k S(n-1,k) + S(n-1,k-1)
    let mut row = vec![0u128; sigma + 1];
    row[0] = 1;
    for _ in 0..d {
        for k in (1..=sigma).rev() {
            row[k] = k as u128 * row[k] + row[k - 1];
        }
        row[0] = 0;
    }
    row[sigma]
}

/// Bell number `B(d)`.
pub fn bell(d: usize) -> u128 {
    (0..=d).map(|k| stirling2(d, k)).sum()
}

/// Predicted speedup of a cumulant update over full recalculation,
/// `t / (2 t_up + B(d))`.
pub fn predicted_speedup(t: usize, t_up: usize, d: usize) -> f64 {
    t as f64 / (2.0 * t_up as f64 + bell(d) as f64)
}

/// Predicted speedup of the moment update alone, `t / (2 t_up)`.
pub fn predicted_moment_speedup(t: usize, t_up: usize) -> f64 {
    t as f64 / (2.0 * t_up as f64)
}

fn pyramid_size(n: usize, k: usize) -> f64 {
    // n^k / k!
    (1..=k).fold(1.0, |acc, i| acc * n as f64 / i as f64)
}

/// Multiplications in the partition products of one order-`d` element,
/// `sum_sigma S(d, sigma) (sigma - 1)`.
pub fn recursion_multiplications(d: usize) -> u128 {
    (1..=d).map(|s| stirling2(d, s) * (s as u128 - 1)).sum()
}

/// Approximate multiplications to update a moment series of orders `1..=d`.
pub fn moment_update_cost(n: usize, d: usize, t_up: usize) -> f64 {
    (1..=d)
        .map(|k| 2.0 * pyramid_size(n, k) * (k as f64 - 1.0) * t_up as f64)
        .sum()
}

/// Approximate multiplications to turn a moment series into cumulants.
pub fn moms2cums_cost(n: usize, d: usize) -> f64 {
    (1..=d)
        .map(|k| pyramid_size(n, k) * (k as f64 - 1.0) * bell(k) as f64)
        .sum()
}

/// Approximate multiplications for one full cumulant update.
pub fn cumulant_update_cost(n: usize, d: usize, t_up: usize) -> f64 {
    moment_update_cost(n, d, t_up) + moms2cums_cost(n, d)
}

/// Approximate multiplications for a full recalculation over `t` samples.
pub fn recalculation_cost(n: usize, d: usize, t: usize) -> f64 {
    (1..=d).map(|k| pyramid_size(n, k) * (k as f64 - 1.0) * t as f64).sum()
}
