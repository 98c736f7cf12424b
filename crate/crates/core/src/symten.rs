//! Block storage for super-symmetric tensors.
//!
//! A tensor of order `d` over `n` variables is cut into hyper-cubic blocks of
//! edge `b`. Only blocks whose block multi-index is non-decreasing are kept,
//! which is one hyper-pyramidal part of the full tensor. When `b` does not
//! divide `n` the blocks touching the last index are truncated on that mode.
//!
//! Blocks hold their full dense content, including entries that repeat under
//! the internal symmetry of (partially) diagonal blocks. Blocks are laid out
//! back to back in one buffer, in multiset-lexicographic order of their block
//! multi-index, and each block is row-major with the last mode contiguous.
//!
//! All indices in this module are zero-based.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymTensorError {
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),
    #[error("index {index:?} out of range for dimension {dim}")]
    IndexOutOfRange { index: Vec<usize>, dim: usize },
    #[error("expected a multi-index of length {expected}, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("shape mismatch: ({0}) vs ({1})")]
    ShapeMismatch(String, String),
    #[error("block multi-index {0:?} is not non-decreasing")]
    NonCanonical(Vec<usize>),
}

/// A multi-index `(i_1, ..., i_d)` into a super-symmetric tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: impl Into<Vec<usize>>) -> Self {
        MultiIndex(entries.into())
    }

    /// Sorted (non-decreasing) copy of the index.
    pub fn canonical(&self) -> MultiIndex {
        let mut v = self.0.clone();
        v.sort_unstable();
        MultiIndex(v)
    }

    pub fn is_canonical(&self) -> bool {
        is_non_decreasing(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

pub(crate) fn is_non_decreasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Metadata of one stored block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    /// Non-decreasing block multi-index.
    pub index: Vec<usize>,
    /// Extent of the block along each mode.
    pub extents: Vec<usize>,
    /// Offset of the block in the flat buffer.
    pub offset: usize,
    /// Number of elements, the product of `extents`.
    pub len: usize,
}

impl BlockInfo {
    /// First global element index covered by the block along mode `k`.
    pub fn start(&self, k: usize, block_size: usize) -> usize {
        self.index[k] * block_size
    }
}

/// Shared shape information: block enumeration and rank tables.
#[derive(Debug, PartialEq)]
pub(crate) struct Layout {
    order: usize,
    dim: usize,
    block_size: usize,
    blocks_per_mode: usize,
    blocks: Vec<BlockInfo>,
    total_len: usize,
    // rank_skip[m][u]: number of non-decreasing tails of length m whose first
    // value is below u (values range over 0..blocks_per_mode)
    rank_skip: Vec<Vec<usize>>,
}

fn multiset_count(symbols: usize, len: usize) -> usize {
    // C(symbols + len - 1, len)
    if len == 0 {
        return 1;
    }
    if symbols == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for k in 1..=len as u128 {
        acc = acc * (symbols as u128 + k - 1) / k;
    }
    acc as usize
}

impl Layout {
    fn new(order: usize, dim: usize, block_size: usize) -> Result<Self, SymTensorError> {
        if order < 1 {
            return Err(SymTensorError::InvalidShape("order must be at least 1".into()));
        }
        if block_size < 1 || block_size > dim {
            return Err(SymTensorError::InvalidShape(format!(
                "block size {block_size} must lie in 1..={dim}"
            )));
        }
        let nbar = dim.div_ceil(block_size);
        let extent = |j: usize| block_size.min(dim - j * block_size);

        let mut blocks = Vec::with_capacity(multiset_count(nbar, order));
        let mut j = vec![0usize; order];
        let mut offset = 0;
        loop {
            let extents: Vec<usize> = j.iter().map(|&jk| extent(jk)).collect();
            let len = extents.iter().product();
            blocks.push(BlockInfo {
                index: j.clone(),
                extents,
                offset,
                len,
            });
            offset += len;
            // next non-decreasing tuple in lexicographic order
            let Some(pos) = (0..order).rev().find(|&k| j[k] + 1 < nbar) else {
                break;
            };
            let v = j[pos] + 1;
            for jk in &mut j[pos..] {
                *jk = v;
            }
        }

        let mut rank_skip = Vec::with_capacity(order);
        for m in 0..order {
            let mut row = Vec::with_capacity(nbar + 1);
            let mut acc = 0;
            row.push(0);
            for u in 0..nbar {
                acc += multiset_count(nbar - u, m);
                row.push(acc);
            }
            rank_skip.push(row);
        }

        Ok(Layout {
            order,
            dim,
            block_size,
            blocks_per_mode: nbar,
            blocks,
            total_len: offset,
            rank_skip,
        })
    }

    /// Position of a non-decreasing block multi-index in the block list.
    #[inline]
    fn rank(&self, j: &[usize]) -> usize {
        let d = self.order;
        let mut rank = 0;
        let mut prev = 0;
        for (k, &v) in j.iter().enumerate() {
            let tail = &self.rank_skip[d - k - 1];
            rank += tail[v] - tail[prev];
            prev = v;
        }
        rank
    }

    /// Flat buffer position of a sorted, in-range element index.
    #[inline]
    fn locate_sorted(&self, sorted: &[usize]) -> usize {
        let b = self.block_size;
        let mut jbuf = [0usize; MAX_FAST_ORDER];
        let d = self.order;
        if d <= MAX_FAST_ORDER {
            for (k, &i) in sorted.iter().enumerate() {
                jbuf[k] = i / b;
            }
            let blk = &self.blocks[self.rank(&jbuf[..d])];
            let mut flat = 0;
            for k in 0..d {
                flat = flat * blk.extents[k] + (sorted[k] - jbuf[k] * b);
            }
            blk.offset + flat
        } else {
            let j: Vec<usize> = sorted.iter().map(|&i| i / b).collect();
            let blk = &self.blocks[self.rank(&j)];
            let mut flat = 0;
            for k in 0..d {
                flat = flat * blk.extents[k] + (sorted[k] - j[k] * b);
            }
            blk.offset + flat
        }
    }
}

const MAX_FAST_ORDER: usize = 16;

/// Super-symmetric tensor stored in the block structure.
#[derive(Debug, Clone)]
pub struct SymTensor {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl PartialEq for SymTensor {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.data == other.data
    }
}

impl SymTensor {
    /// Zero tensor of the given order, dimension and block size.
    pub fn zeros(order: usize, dim: usize, block_size: usize) -> Result<Self, SymTensorError> {
        let layout = Arc::new(Layout::new(order, dim, block_size)?);
        let data = vec![0.0; layout.total_len];
        Ok(SymTensor { layout, data })
    }

    /// Zero tensor sharing this tensor's layout.
    pub fn zeros_like(&self) -> Self {
        SymTensor {
            layout: Arc::clone(&self.layout),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn block_size(&self) -> usize {
        self.layout.block_size
    }

    /// Number of blocks along one mode, `ceil(n / b)`.
    pub fn blocks_per_mode(&self) -> usize {
        self.layout.blocks_per_mode
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.blocks.len()
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.layout.blocks
    }

    /// Content of the `k`-th stored block (row-major).
    pub fn block(&self, k: usize) -> &[f64] {
        let info = &self.layout.blocks[k];
        &self.data[info.offset..info.offset + info.len]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let info = &self.layout.blocks[k];
        &mut self.data[info.offset..info.offset + info.len]
    }

    /// Flat storage of all blocks.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.order(), self.dim(), self.block_size())
    }

    pub fn same_shape(&self, other: &SymTensor) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &SymTensor) -> Result<(), SymTensorError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(SymTensorError::ShapeMismatch(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    fn check_index(&self, idx: &[usize]) -> Result<(), SymTensorError> {
        if idx.len() != self.order() {
            return Err(SymTensorError::WrongArity {
                expected: self.order(),
                got: idx.len(),
            });
        }
        if idx.iter().any(|&i| i >= self.dim()) {
            return Err(SymTensorError::IndexOutOfRange {
                index: idx.to_vec(),
                dim: self.dim(),
            });
        }
        Ok(())
    }

    /// Element at `idx`; any permutation of `idx` gives the same value.
    pub fn get(&self, idx: &[usize]) -> Result<f64, SymTensorError> {
        self.check_index(idx)?;
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        Ok(self.get_sorted(&sorted))
    }

    /// Element at an already sorted, in-range index. No checks.
    #[inline]
    pub(crate) fn get_sorted(&self, sorted: &[usize]) -> f64 {
        debug_assert!(is_non_decreasing(sorted));
        self.data[self.layout.locate_sorted(sorted)]
    }

    /// Sets the element at `idx` and all its symmetric copies, including the
    /// copies held inside the stored block when it is (partially) diagonal.
    pub fn set_canonical(&mut self, idx: &[usize], value: f64) -> Result<(), SymTensorError> {
        self.check_index(idx)?;
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let b = self.block_size();
        let j: Vec<usize> = sorted.iter().map(|&i| i / b).collect();
        let blk = &self.layout.blocks[self.layout.rank(&j)];
        let offsets: Vec<usize> = sorted.iter().zip(&j).map(|(&i, &jk)| i - jk * b).collect();

        // Permute offsets only among modes sharing the same block coordinate.
        let mut positions = Vec::new();
        for_each_distinct_permutation(&offsets, &j, &mut |perm| {
            let flat = perm.iter().zip(&blk.extents).fold(0, |acc, (&p, &e)| acc * e + p);
            positions.push(blk.offset + flat);
        });
        for p in positions {
            self.data[p] = value;
        }
        Ok(())
    }

    /// Dense `n^d` copy.
    pub fn densify(&self) -> DenseTensor {
        let n = self.dim();
        let d = self.order();
        let mut dense = DenseTensor::zeros(d, n);
        let mut idx = vec![0usize; d];
        let mut sorted = vec![0usize; d];
        for v in dense.data.iter_mut() {
            sorted.copy_from_slice(&idx);
            sorted.sort_unstable();
            *v = self.get_sorted(&sorted);
            increment_odometer(&mut idx, n);
        }
        dense
    }

    /// Builds the block representation of a dense tensor, reading every block
    /// entry from the corresponding dense position. Symmetry of the input is
    /// not checked.
    pub fn from_dense(dense: &DenseTensor, block_size: usize) -> Result<Self, SymTensorError> {
        let mut t = SymTensor::zeros(dense.order, dense.dim, block_size)?;
        let b = block_size;
        let layout = Arc::clone(&t.layout);
        for info in &layout.blocks {
            let out = &mut t.data[info.offset..info.offset + info.len];
            let mut local = vec![0usize; info.index.len()];
            let mut global = vec![0usize; info.index.len()];
            for v in out.iter_mut() {
                for k in 0..local.len() {
                    global[k] = info.index[k] * b + local[k];
                }
                *v = dense.get(&global);
                increment_odometer_extents(&mut local, &info.extents);
            }
        }
        Ok(t)
    }

    /// `self + a * other`.
    pub fn axpy(&self, other: &SymTensor, a: f64) -> Result<SymTensor, SymTensorError> {
        let mut out = self.clone();
        out.axpy_in_place(other, a)?;
        Ok(out)
    }

    pub fn axpy_in_place(&mut self, other: &SymTensor, a: f64) -> Result<(), SymTensorError> {
        self.check_same_shape(other)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// Entry-wise k-norm of the full tensor, summing each stored block
    /// weighted by the number of times it recurs in the full tensor.
    pub fn knorm(&self, k: f64) -> f64 {
        let per_block = |info: &BlockInfo, block: &[f64]| -> f64 {
            let mult = block_multiplicity_unchecked(&info.index) as f64;
            let s: f64 = if k == 2.0 {
                block.iter().map(|e| e * e).sum()
            } else if k == 1.0 {
                block.iter().map(|e| e.abs()).sum()
            } else {
                block.iter().map(|e| e.abs().powf(k)).sum()
            };
            mult * s
        };
        let z: f64 = par::map_sum(&self.layout.blocks, |info| {
            per_block(info, &self.data[info.offset..info.offset + info.len])
        });
        if k == 2.0 {
            z.sqrt()
        } else if k == 1.0 {
            z
        } else {
            z.powf(1.0 / k)
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.knorm(2.0)
    }

    /// Disjoint mutable views of every block, paired with their metadata.
    pub(crate) fn blocks_mut(&mut self) -> Vec<(&BlockInfo, &mut [f64])> {
        let mut out = Vec::with_capacity(self.layout.blocks.len());
        let mut rest: &mut [f64] = &mut self.data;
        for info in &self.layout.blocks {
            let (head, tail) = rest.split_at_mut(info.len);
            out.push((info, head));
            rest = tail;
        }
        out
    }

    pub fn to_dump(&self) -> SymTensorDump {
        SymTensorDump {
            order: self.order(),
            dim: self.dim(),
            block_size: self.block_size(),
            blocks: (0..self.num_blocks()).map(|k| self.block(k).to_vec()).collect(),
        }
    }

    pub fn from_dump(dump: &SymTensorDump) -> Result<Self, SymTensorError> {
        let mut t = SymTensor::zeros(dump.order, dump.dim, dump.block_size)?;
        if dump.blocks.len() != t.num_blocks() {
            return Err(SymTensorError::InvalidShape(format!(
                "dump holds {} blocks, layout needs {}",
                dump.blocks.len(),
                t.num_blocks()
            )));
        }
        for (k, blk) in dump.blocks.iter().enumerate() {
            let dst = t.block_mut(k);
            if dst.len() != blk.len() {
                return Err(SymTensorError::InvalidShape(format!(
                    "block {k} has {} entries, expected {}",
                    blk.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(blk);
        }
        Ok(t)
    }
}

/// Serialized form: shape plus every stored block in multiset-lexicographic
/// order of the block multi-index, each block row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensorDump {
    pub order: usize,
    pub dim: usize,
    pub block_size: usize,
    pub blocks: Vec<Vec<f64>>,
}

/// Number of times a block with non-decreasing multi-index `j` appears in the
/// full tensor: `d! / prod(r_l!)` with `r_l` the run lengths of equal entries.
pub fn block_multiplicity(j: &[usize]) -> Result<u64, SymTensorError> {
    if !is_non_decreasing(j) {
        return Err(SymTensorError::NonCanonical(j.to_vec()));
    }
    Ok(block_multiplicity_unchecked(j))
}

fn block_multiplicity_unchecked(j: &[usize]) -> u64 {
    // multinomial d! / prod r! built incrementally to stay in range
    let mut result: u64 = 1;
    let mut placed: u64 = 0;
    let mut run: u64 = 0;
    for (k, &v) in j.iter().enumerate() {
        if k > 0 && v == j[k - 1] {
            run += 1;
        } else {
            run = 1;
        }
        placed += 1;
        // multiply by placed / run keeps the value integral
        result = result * placed / run;
    }
    result
}

/// Plain dense tensor with `n^d` entries, last mode contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub order: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        DenseTensor {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let p = self.flat_index(idx);
        self.data[p] = v;
    }

    /// Visits every multi-index in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> {
        let n = self.dim;
        let d = self.order;
        let total = self.data.len();
        let mut idx = vec![0usize; d];
        (0..total).map(move |_| {
            let cur = idx.clone();
            increment_odometer(&mut idx, n);
            cur
        })
    }
}

pub(crate) fn increment_odometer(idx: &mut [usize], n: usize) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < n {
            return;
        }
        idx[k] = 0;
    }
}

pub(crate) fn increment_odometer_extents(idx: &mut [usize], extents: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < extents[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Calls `f` with every distinct arrangement of `values` obtained by permuting
/// entries only within runs of equal `groups` (both slices sorted together).
fn for_each_distinct_permutation(values: &[usize], groups: &[usize], f: &mut dyn FnMut(&[usize])) {
    let d = values.len();
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=d {
        if k == d || groups[k] != groups[start] {
            runs.push((start, k));
            start = k;
        }
    }
    let mut cur = values.to_vec();
    fn recurse(runs: &[(usize, usize)], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        let Some(&(lo, hi)) = runs.first() else {
            f(cur);
            return;
        };
        // walk all distinct permutations of cur[lo..hi] in lexicographic order
        cur[lo..hi].sort_unstable();
        loop {
            recurse(&runs[1..], cur, f);
            if !next_permutation(&mut cur[lo..hi]) {
                break;
            }
        }
        cur[lo..hi].sort_unstable();
    }
    recurse(&runs, &mut cur, f);
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
