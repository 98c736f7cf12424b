//! Raw moment tensors of data batches and their sliding-window update.
//!
//! `m_i(X) = (1/t) sum_l prod_k x[l, i_k]` is evaluated block by block over
//! the stored pyramid. Moments are never centred: an update shifts the mean,
//! so only raw moments can be updated by adding and removing batches.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::data::{DataBatch, DataError};
use crate::par;
use crate::symten::{BlockInfo, SymTensor, SymTensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentsError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] SymTensorError),
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("update batch of {t_up} rows exceeds the window length {t}")]
    UpdateTooLarge { t_up: usize, t: usize },
    #[error("incoming batch has {plus} rows but outgoing batch has {minus}")]
    RowMismatch { plus: usize, minus: usize },
    #[error("batch has {got} columns, moments are over {expected} variables")]
    ColumnMismatch { got: usize, expected: usize },
    #[error("moment series shapes differ")]
    SeriesMismatch,
}

/// Counts data rows handed to the moment kernels. A batch of `s` rows that
/// feeds a full moment series counts `s` once.
#[derive(Debug, Default)]
pub struct RowCounter(AtomicU64);

impl RowCounter {
    pub fn new() -> Self {
        RowCounter(AtomicU64::new(0))
    }

    pub fn add(&self, rows: usize) {
        self.0.fetch_add(rows as u64, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) -> u64 {
        self.0.swap(0, Ordering::Relaxed)
    }
}

// rows per tile in the block kernel; the prefix buffers of one tile stay in L1
const TILE: usize = 256;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let r = ca.remainder();
    for x in ca {
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + r.iter().sum::<f64>()
}

/// Column-major view of a batch used by the kernels.
struct Columns {
    rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn new(x: &DataBatch) -> Self {
        Columns { rows: x.rows(), data: x.transposed() }
    }

    #[inline]
    fn tile(&self, col: usize, start: usize, end: usize) -> &[f64] {
        let base = col * self.rows;
        &self.data[base + start..base + end]
    }
}

/// Adds `sign * sum_l prod_k x[l, i_k]` for every entry `i` of one block.
fn accumulate_block(
    info: &BlockInfo,
    block_size: usize,
    cols: &Columns,
    sign: f64,
    out: &mut [f64],
    scratch: &mut [Vec<f64>],
) {
    let d = info.index.len();
    let starts: Vec<usize> = info.index.iter().map(|&j| j * block_size).collect();
    let mut lo = 0;
    while lo < cols.rows {
        let hi = (lo + TILE).min(cols.rows);
        recurse(0, 0, None, d, &starts, &info.extents, cols, lo, hi, sign, out, scratch);
        lo = hi;
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    level: usize,
    flat: usize,
    prefix: Option<&[f64]>,
    d: usize,
    starts: &[usize],
    extents: &[usize],
    cols: &Columns,
    lo: usize,
    hi: usize,
    sign: f64,
    out: &mut [f64],
    scratch: &mut [Vec<f64>],
) {
    let e = extents[level];
    if level + 1 == d {
        let base = flat * e;
        for a in 0..e {
            let col = cols.tile(starts[level] + a, lo, hi);
            let v = match prefix {
                Some(p) => dot(p, col),
                None => sum(col),
            };
            out[base + a] += sign * v;
        }
        return;
    }
    let (mine, deeper) = scratch.split_first_mut().expect("scratch depth");
    for a in 0..e {
        let col = cols.tile(starts[level] + a, lo, hi);
        let next: &[f64] = match prefix {
            Some(p) => {
                let buf = &mut mine[..hi - lo];
                for ((b, &x), &y) in buf.iter_mut().zip(p).zip(col) {
                    *b = x * y;
                }
                buf
            }
            None => col,
        };
        recurse(
            level + 1,
            flat * e + a,
            Some(next),
            d,
            starts,
            extents,
            cols,
            lo,
            hi,
            sign,
            out,
            &mut *deeper,
        );
    }
}

fn new_scratch(d: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; TILE]; d]
}

/// Adds `scale * sum_l prod_k x[l, i_k]` over each batch (with its sign) to
/// every element of `target`.
fn accumulate_sums(target: &mut SymTensor, batches: &[(&Columns, f64)], scale: f64) {
    let b = target.block_size();
    let d = target.order();
    par::for_each(target.blocks_mut(), |(info, out)| {
        let mut scratch = new_scratch(d);
        let mut acc = vec![0.0; out.len()];
        for &(cols, sign) in batches {
            accumulate_block(info, b, cols, sign, &mut acc, &mut scratch);
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o += scale * a;
        }
    });
}

/// Moment tensor of the given order.
pub fn moment_tensor(x: &DataBatch, order: usize, block_size: usize) -> Result<SymTensor, MomentsError> {
    if order == 0 {
        return Err(MomentsError::ZeroOrder);
    }
    let mut t = SymTensor::zeros(order, x.cols(), block_size)?;
    let cols = Columns::new(x);
    accumulate_sums(&mut t, &[(&cols, 1.0)], 1.0 / x.rows() as f64);
    Ok(t)
}

/// Moment tensors of orders `1..=d` plus the number of samples they cover.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    tensors: Vec<SymTensor>,
    window_len: usize,
}

impl MomentSeries {
    pub fn from_tensors(tensors: Vec<SymTensor>, window_len: usize) -> Result<Self, MomentsError> {
        let Some(first) = tensors.first() else {
            return Err(MomentsError::ZeroOrder);
        };
        let (n, b) = (first.dim(), first.block_size());
        for (k, t) in tensors.iter().enumerate() {
            if t.order() != k + 1 || t.dim() != n || t.block_size() != b {
                return Err(MomentsError::SeriesMismatch);
            }
        }
        Ok(MomentSeries { tensors, window_len })
    }

    /// Zero moments, useful as the identity of [`combine`].
    pub fn zeros(max_order: usize, dim: usize, block_size: usize) -> Result<Self, MomentsError> {
        if max_order == 0 {
            return Err(MomentsError::ZeroOrder);
        }
        let tensors = (1..=max_order)
            .map(|s| SymTensor::zeros(s, dim, block_size))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MomentSeries { tensors, window_len: 0 })
    }

    pub fn max_order(&self) -> usize {
        self.tensors.len()
    }

    pub fn dim(&self) -> usize {
        self.tensors[0].dim()
    }

    pub fn block_size(&self) -> usize {
        self.tensors[0].block_size()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Moment tensor of order `s` (1-based).
    pub fn get(&self, s: usize) -> Option<&SymTensor> {
        s.checked_sub(1).and_then(|k| self.tensors.get(k))
    }

    pub fn tensors(&self) -> &[SymTensor] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<SymTensor> {
        self.tensors
    }

    fn same_shape(&self, other: &MomentSeries) -> bool {
        self.max_order() == other.max_order()
            && self.dim() == other.dim()
            && self.block_size() == other.block_size()
    }

    /// Advances the window: adds the incoming rows and removes the outgoing
    /// ones, `M <- M + (t_up/t) (M(X+) - M(X-))` for every order.
    pub fn update(
        &mut self,
        plus: &DataBatch,
        minus: &DataBatch,
        counter: Option<&RowCounter>,
    ) -> Result<(), MomentsError> {
        let t = self.window_len;
        if plus.rows() != minus.rows() {
            return Err(MomentsError::RowMismatch { plus: plus.rows(), minus: minus.rows() });
        }
        if plus.rows() > t {
            return Err(MomentsError::UpdateTooLarge { t_up: plus.rows(), t });
        }
        for batch in [plus, minus] {
            if batch.cols() != self.dim() {
                return Err(MomentsError::ColumnMismatch { got: batch.cols(), expected: self.dim() });
            }
        }
        let (cp, cm) = (Columns::new(plus), Columns::new(minus));
        if let Some(c) = counter {
            c.add(plus.rows() + minus.rows());
        }
        let scale = 1.0 / t as f64;
        for m in &mut self.tensors {
            accumulate_sums(m, &[(&cp, 1.0), (&cm, -1.0)], scale);
        }
        Ok(())
    }
}

/// Moments of orders `1..=d`.
pub fn moment_series(x: &DataBatch, d: usize, block_size: usize) -> Result<MomentSeries, MomentsError> {
    moment_series_counted(x, d, block_size, None)
}

pub fn moment_series_counted(
    x: &DataBatch,
    d: usize,
    block_size: usize,
    counter: Option<&RowCounter>,
) -> Result<MomentSeries, MomentsError> {
    if d == 0 {
        return Err(MomentsError::ZeroOrder);
    }
    let cols = Columns::new(x);
    if let Some(c) = counter {
        c.add(x.rows());
    }
    let scale = 1.0 / x.rows() as f64;
    let mut tensors = Vec::with_capacity(d);
    for s in 1..=d {
        let mut t = SymTensor::zeros(s, x.cols(), block_size)?;
        accumulate_sums(&mut t, &[(&cols, 1.0)], scale);
        tensors.push(t);
    }
    Ok(MomentSeries { tensors, window_len: x.rows() })
}

/// Pooled moments of two disjoint sample sets of sizes `s1` and `s2`.
pub fn combine(
    m1: &MomentSeries,
    s1: usize,
    m2: &MomentSeries,
    s2: usize,
) -> Result<MomentSeries, MomentsError> {
    if !m1.same_shape(m2) {
        return Err(MomentsError::SeriesMismatch);
    }
    let total = s1 + s2;
    if total == 0 {
        return Ok(m1.clone());
    }
    let (w1, w2) = (s1 as f64 / total as f64, s2 as f64 / total as f64);
    let tensors = m1
        .tensors
        .iter()
        .zip(&m2.tensors)
        .map(|(a, b)| {
            let mut out = a.clone();
            for (o, (&x, &y)) in out.as_mut_slice().iter_mut().zip(a.as_slice().iter().zip(b.as_slice())) {
                *o = w1 * x + w2 * y;
            }
            out
        })
        .collect();
    Ok(MomentSeries { tensors, window_len: total })
}

/// Moments of `x` computed over `parts` contiguous row chunks and merged with
/// [`combine`] in chunk order.
pub fn moment_series_chunked(
    x: &DataBatch,
    d: usize,
    block_size: usize,
    parts: usize,
) -> Result<MomentSeries, MomentsError> {
    let parts = parts.clamp(1, x.rows());
    let bounds: Vec<(usize, usize)> = (0..parts)
        .map(|p| (p * x.rows() / parts, (p + 1) * x.rows() / parts))
        .collect();
    let pieces = par::map(&bounds, |&(lo, hi)| {
        let chunk = x.slice_rows(lo, hi)?;
        moment_series(&chunk, d, block_size).map(|m| (m, hi - lo))
    });
    let mut acc: Option<(MomentSeries, usize)> = None;
    for piece in pieces {
        let (m, s) = piece?;
        acc = Some(match acc {
            None => (m, s),
            Some((a, sa)) => (combine(&a, sa, &m, s)?, sa + s),
        });
    }
    Ok(acc.expect("at least one chunk").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> DataBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        DataBatch::new(rows, cols, data).unwrap()
    }

    fn naive_moment(x: &DataBatch, idx: &[usize]) -> f64 {
        (0..x.rows())
            .map(|l| idx.iter().map(|&i| x.row(l)[i]).product::<f64>())
            .sum::<f64>()
            / x.rows() as f64
    }

    fn max_rel(a: &SymTensor, b: &SymTensor) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
            .fold(0.0, f64::max)
    }

    #[test]
    fn univariate_by_hand() {
        let x = DataBatch::from_column(&[1.0, 2.0]).unwrap();
        assert_eq!(moment_tensor(&x, 1, 1).unwrap().get(&[0]).unwrap(), 1.5);
        assert_eq!(moment_tensor(&x, 2, 1).unwrap().get(&[0, 0]).unwrap(), 2.5);
    }

    #[test]
    fn constant_column_powers() {
        let x = DataBatch::from_column(&[1.5; 7]).unwrap();
        for q in 1..=5 {
            let m = moment_tensor(&x, q, 1).unwrap().get(&vec![0; q]).unwrap();
            assert!((m - 1.5f64.powi(q as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dense() {
        let x = random_batch(50, 5, 7);
        let m = moment_tensor(&x, 4, 2).unwrap();
        for idx in m.densify().indices() {
            let want = naive_moment(&x, &idx);
            let got = m.get(&idx).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-3), "{idx:?}");
        }
    }

    #[test]
    fn tiles_longer_than_one() {
        let x = random_batch(3 * TILE + 17, 3, 8);
        let m = moment_tensor(&x, 3, 2).unwrap();
        for idx in m.densify().indices() {
            let want = naive_moment(&x, &idx);
            assert!((m.get(&idx).unwrap() - want).abs() <= 1e-12 * want.abs().max(1e-3));
        }
    }

    #[test]
    fn series_shape_and_first_order() {
        let x = random_batch(30, 4, 1);
        let ms = moment_series(&x, 3, 3).unwrap();
        assert_eq!(ms.max_order(), 3);
        for (k, t) in ms.tensors().iter().enumerate() {
            assert_eq!(t.shape(), (k + 1, 4, 3));
        }
        for j in 0..4 {
            let mean = x.column(j).iter().sum::<f64>() / 30.0;
            assert!((ms.get(1).unwrap().get(&[j]).unwrap() - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_and_zero_order_rejected() {
        let x = random_batch(3, 2, 1);
        assert_eq!(moment_tensor(&x, 0, 1), Err(MomentsError::ZeroOrder));
        assert!(DataBatch::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn combine_matches_concatenation() {
        let a = random_batch(40, 4, 2);
        let b = random_batch(25, 4, 3);
        let ma = moment_series(&a, 4, 2).unwrap();
        let mb = moment_series(&b, 4, 2).unwrap();
        let joint = moment_series(&a.vstack(&b).unwrap(), 4, 2).unwrap();
        let merged = combine(&ma, 40, &mb, 25).unwrap();
        for (x, y) in merged.tensors().iter().zip(joint.tensors()) {
            assert!(max_rel(x, y) < 1e-12);
        }
        assert_eq!(merged.window_len(), 65);
        let same = combine(&ma, 40, &ma, 40).unwrap();
        for (x, y) in same.tensors().iter().zip(ma.tensors()) {
            assert!(max_rel(x, y) < 1e-15);
        }
        let z = MomentSeries::zeros(4, 4, 2).unwrap();
        assert_eq!(combine(&ma, 40, &z, 0).unwrap().tensors(), ma.tensors());
    }

    #[test]
    fn chunked_matches_direct() {
        let x = random_batch(101, 4, 5);
        let direct = moment_series(&x, 3, 2).unwrap();
        let chunked = moment_series_chunked(&x, 3, 2, 4).unwrap();
        for (a, b) in direct.tensors().iter().zip(chunked.tensors()) {
            assert!(max_rel(a, b) < 1e-12);
        }
    }

    #[test]
    fn update_no_change_when_batches_equal() {
        let x = random_batch(20, 3, 4);
        let y = random_batch(5, 3, 5);
        let mut m = moment_series(&x, 3, 2).unwrap();
        let before = m.clone();
        m.update(&y, &y, None).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn full_replacement() {
        let x = random_batch(12, 3, 6);
        let y = random_batch(12, 3, 7);
        let mut m = moment_series(&x, 3, 2).unwrap();
        m.update(&y, &x, None).unwrap();
        let want = moment_series(&y, 3, 2).unwrap();
        for (a, b) in m.tensors().iter().zip(want.tensors()) {
            assert!(max_rel(a, b) < 1e-12);
        }
    }

    #[test]
    fn update_errors() {
        let x = random_batch(10, 3, 6);
        let mut m = moment_series(&x, 2, 1).unwrap();
        let big = random_batch(11, 3, 1);
        assert!(matches!(m.update(&big, &big, None), Err(MomentsError::UpdateTooLarge { .. })));
        let a = random_batch(2, 3, 1);
        let b = random_batch(3, 3, 1);
        assert!(matches!(m.update(&a, &b, None), Err(MomentsError::RowMismatch { .. })));
        let c = random_batch(2, 4, 1);
        assert!(matches!(m.update(&c, &c, None), Err(MomentsError::ColumnMismatch { .. })));
    }

    #[test]
    fn counter_sees_two_batches() {
        let x = random_batch(100, 3, 6);
        let y = random_batch(10, 3, 7);
        let mut m = moment_series(&x, 4, 2).unwrap();
        let c = RowCounter::new();
        m.update(&y, &x.slice_rows(0, 10).unwrap(), Some(&c)).unwrap();
        assert_eq!(c.get(), 20);
    }
}
