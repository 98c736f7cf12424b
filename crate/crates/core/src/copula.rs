//! Synthetic streams: a Gaussian first window followed by update batches drawn
//! from a Student-t copula with Gaussian marginals. The marginals of both
//! regimes are identical, only the joint law changes.
//!
//! Randomness is ChaCha8 keyed by the configured seed. Every batch is cut into
//! chunks of [`CHUNK_ROWS`] rows and chunk `c` of batch `k` draws from stream
//! `(k << 24) | c`, so a batch is a pure function of `(seed, k, rows)` and
//! chunks can be generated in parallel without changing the output.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::data::DataBatch;
use crate::par;

pub const CHUNK_ROWS: usize = 1024;
pub const DEFAULT_COPULA_DOF: f64 = 10.0;

// stream id reserved for drawing the default correlation matrix
const CORRELATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CopulaError {
    #[error("covariance is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("covariance must be {n}x{n}")]
    BadCovarianceShape { n: usize },
    #[error("mean vector must have {n} entries, got {got}")]
    BadMeanShape { n: usize, got: usize },
    #[error("copula degrees of freedom must exceed 2, got {0}")]
    BadDof(f64),
    #[error("invalid generator setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub t: usize,
    pub t_up: usize,
    pub w_max: usize,
    pub copula_dof: f64,
    pub mu: Vec<f64>,
    /// Row-major `n x n` covariance.
    pub sigma: Vec<f64>,
    pub seed: u64,
}

impl GenConfig {
    /// Zero mean, unit variances and a seeded random correlation matrix.
    pub fn new(n: usize, t: usize, t_up: usize, w_max: usize, seed: u64) -> Self {
        GenConfig {
            n,
            t,
            t_up,
            w_max,
            copula_dof: DEFAULT_COPULA_DOF,
            mu: vec![0.0; n],
            sigma: random_correlation(n, seed),
            seed,
        }
    }

    /// Total rows of the experiment stream.
    pub fn total_rows(&self) -> usize {
        self.t + self.w_max.saturating_sub(1) * self.t_up
    }
}

/// Correlation matrix `D^-1/2 A A^T D^-1/2` from a seeded `n x n` standard
/// normal matrix `A`, row-major.
pub fn random_correlation(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CORRELATION_STREAM);
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let s = &a * a.transpose();
    let d: Vec<f64> = (0..n).map(|i| s[(i, i)].sqrt()).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if i == j { 1.0 } else { s[(i, j)] / (d[i] * d[j]) };
        }
    }
    out
}

/// Prepared sampler for one [`GenConfig`].
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    cfg: GenConfig,
    chol_cov: DMatrix<f64>,
    chol_corr: DMatrix<f64>,
    sd: Vec<f64>,
    t_dist: StudentsT,
    chi2: ChiSquared<f64>,
}

impl StreamGenerator {
    pub fn new(cfg: GenConfig) -> Result<Self, CopulaError> {
        let n = cfg.n;
        if n == 0 {
            return Err(CopulaError::Invalid("n must be positive".into()));
        }
        if cfg.sigma.len() != n * n {
            return Err(CopulaError::BadCovarianceShape { n });
        }
        if cfg.mu.len() != n {
            return Err(CopulaError::BadMeanShape { n, got: cfg.mu.len() });
        }
        if cfg.copula_dof.is_nan() || cfg.copula_dof <= 2.0 || cfg.copula_dof.is_infinite() {
            return Err(CopulaError::BadDof(cfg.copula_dof));
        }
        let cov = DMatrix::from_row_slice(n, n, &cfg.sigma);
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-12 * cov.abs().max().max(1.0) {
            return Err(CopulaError::NotPositiveDefinite);
        }
        let chol_cov = cov.clone().cholesky().ok_or(CopulaError::NotPositiveDefinite)?.l();
        let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
        let corr = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
        let chol_corr = corr.cholesky().ok_or(CopulaError::NotPositiveDefinite)?.l();
        let t_dist = StudentsT::new(0.0, 1.0, cfg.copula_dof).map_err(|e| CopulaError::Invalid(e.to_string()))?;
        let chi2 = ChiSquared::new(cfg.copula_dof).map_err(|e| CopulaError::Invalid(e.to_string()))?;
        Ok(StreamGenerator { cfg, chol_cov, chol_corr, sd, t_dist, chi2 })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    fn chunked<F>(&self, batch_index: u64, rows: usize, fill: F) -> DataBatch
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync + Send,
    {
        let n = self.cfg.n;
        let chunks = rows.div_ceil(CHUNK_ROWS);
        let parts = par::map_range(chunks, |c| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream((batch_index << 24) | c as u64);
            let len = CHUNK_ROWS.min(rows - c * CHUNK_ROWS);
            let mut out = vec![0.0; len * n];
            for row in out.chunks_exact_mut(n) {
                fill(&mut rng, row);
            }
            out
        });
        DataBatch::new(rows, n, parts.concat()).expect("rows > 0")
    }

    fn correlated_normals(chol: &DMatrix<f64>, rng: &mut ChaCha8Rng, eps: &mut [f64], out: &mut [f64]) {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let n = eps.len();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += chol[(i, j)] * eps[j];
            }
            out[i] = acc;
        }
    }

    /// `rows` draws from `N(mu, sigma)`.
    pub fn gaussian_batch(&self, batch_index: u64, rows: usize) -> DataBatch {
        let n = self.cfg.n;
        self.chunked(batch_index, rows, |rng, row| {
            let mut eps = vec![0.0; n];
            Self::correlated_normals(&self.chol_cov, rng, &mut eps, row);
            for (x, m) in row.iter_mut().zip(&self.cfg.mu) {
                *x += m;
            }
        })
    }

    /// Lower-tail probability and its Gaussian quantile for a t variate,
    /// evaluated on the negative half so neither tail loses precision.
    fn t_to_gaussian(&self, y: f64) -> (f64, f64) {
        let lower = self.t_dist.cdf(-y.abs());
        let z = Normal::standard().inverse_cdf(lower);
        if y > 0.0 {
            (1.0 - lower, -z)
        } else {
            (lower, z)
        }
    }

    fn tcopula_rows(&self, batch_index: u64, rows: usize, uniforms: bool) -> DataBatch {
        let n = self.cfg.n;
        let dof = self.cfg.copula_dof;
        self.chunked(batch_index, rows, |rng, row| {
            let mut eps = vec![0.0; n];
            Self::correlated_normals(&self.chol_corr, rng, &mut eps, row);
            let w: f64 = self.chi2.sample(rng);
            let scale = (w / dof).sqrt();
            for (i, x) in row.iter_mut().enumerate() {
                let (u, z) = self.t_to_gaussian(*x / scale);
                *x = if uniforms { u } else { self.cfg.mu[i] + self.sd[i] * z };
            }
        })
    }

    /// `rows` draws from the t copula with Gaussian marginals `N(mu_i, sigma_ii)`.
    pub fn tcopula_batch(&self, batch_index: u64, rows: usize) -> DataBatch {
        self.tcopula_rows(batch_index, rows, false)
    }

    /// The copula's uniform scores `U_i = T_nu(Y_i)` for the same draws as
    /// [`tcopula_batch`](Self::tcopula_batch).
    pub fn tcopula_uniforms(&self, batch_index: u64, rows: usize) -> DataBatch {
        self.tcopula_rows(batch_index, rows, true)
    }

    /// One Gaussian batch of `t` rows, then `w_max - 1` copula batches of
    /// `t_up` rows.
    pub fn experiment_stream(&self) -> impl Iterator<Item = DataBatch> + '_ {
        let w_max = self.cfg.w_max;
        (0..w_max).map(move |w| {
            if w == 0 {
                self.gaussian_batch(0, self.cfg.t)
            } else {
                self.tcopula_batch(w as u64, self.cfg.t_up)
            }
        })
    }
}
