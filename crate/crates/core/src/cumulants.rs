//! Moments to cumulants through the set-partition recursion.
//!
//! For order `s`, `c_i = m_i - A_i` where `A_i` sums, over every partition of
//! the positions `{0..s}` into at least two parts, the product of lower-order
//! cumulant elements indexed by each part. Because the moments are raw, every
//! partition contributes, singletons included.

use thiserror::Error;

use crate::data::DataBatch;
use crate::moments::{moment_series, MomentSeries, MomentsError};
use crate::par;
use crate::symten::{increment_odometer_extents, SymTensor, SymTensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CumulantsError {
    #[error("number of parts {sigma} must lie in 1..={s}")]
    PartsOutOfRange { s: usize, sigma: usize },
    #[error("multi-index of length {got} given for order {s}")]
    WrongArity { s: usize, got: usize },
    #[error("cumulants of orders 1..{needed} are required, {given} given")]
    MissingLowerOrders { needed: usize, given: usize },
    #[error(transparent)]
    Tensor(#[from] SymTensorError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

/// A partition of `{0..s}` into disjoint non-empty parts. Parts are listed in
/// order of their smallest element and each part is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetPartition {
    pub parts: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Builds the partition encoded by a restricted growth string.
    pub fn from_rgs(rgs: &[usize]) -> Self {
        let count = rgs.iter().max().map_or(0, |m| m + 1);
        let mut parts = vec![Vec::new(); count];
        for (pos, &label) in rgs.iter().enumerate() {
            parts[label].push(pos);
        }
        SetPartition { parts }
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }
}

/// All partitions of `{0..s}` into exactly `sigma` parts, in lexicographic
/// order of their restricted growth strings.
pub fn partitions(s: usize, sigma: usize) -> Result<Vec<SetPartition>, CumulantsError> {
    if sigma < 1 || sigma > s {
        return Err(CumulantsError::PartsOutOfRange { s, sigma });
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; s];
    fn fill(pos: usize, used: usize, sigma: usize, rgs: &mut [usize], out: &mut Vec<SetPartition>) {
        let s = rgs.len();
        if pos == s {
            if used == sigma {
                out.push(SetPartition::from_rgs(rgs));
            }
            return;
        }
        // labels still to be opened must fit into the remaining positions
        if sigma - used > s - pos {
            return;
        }
        let top = used.min(sigma - 1);
        for label in 0..=top {
            rgs[pos] = label;
            fill(pos + 1, used.max(label + 1), sigma, rgs, out);
        }
    }
    // position 0 always opens part 0
    fill(1, 1, sigma, &mut rgs, &mut out);
    Ok(out)
}

/// Partitions of `{0..s}` with at least two parts, flattened for the inner
/// loop: `parts` holds (length, first position slot) pairs into `positions`.
#[derive(Debug, Clone)]
struct PartitionTemplate {
    s: usize,
    partitions: Vec<Vec<(usize, usize)>>,
    positions: Vec<usize>,
}

impl PartitionTemplate {
    fn new(s: usize) -> Self {
        let mut partitions = Vec::new();
        let mut positions = Vec::new();
        for sigma in 2..=s {
            for p in partitions_unchecked(s, sigma) {
                let mut parts = Vec::with_capacity(p.parts.len());
                for part in &p.parts {
                    parts.push((part.len(), positions.len()));
                    positions.extend_from_slice(part);
                }
                partitions.push(parts);
            }
        }
        PartitionTemplate { s, partitions, positions }
    }

    /// `A_i` for a sorted multi-index `idx` of length `s`.
    #[inline]
    fn outer_element(&self, idx: &[usize], lower: &[SymTensor]) -> f64 {
        let mut sub = [0usize; 32];
        let mut total = 0.0;
        for parts in &self.partitions {
            let mut prod = 1.0;
            for &(len, at) in parts {
                for (slot, &p) in sub[..len].iter_mut().zip(&self.positions[at..at + len]) {
                    *slot = idx[p];
                }
                // a sub-tuple of a sorted index is sorted
                prod *= lower[len - 1].get_sorted(&sub[..len]);
            }
            total += prod;
        }
        total
    }
}

fn partitions_unchecked(s: usize, sigma: usize) -> Vec<SetPartition> {
    partitions(s, sigma).expect("sigma in range")
}

/// Cumulant tensors of orders `1..=d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSeries {
    tensors: Vec<SymTensor>,
}

impl CumulantSeries {
    pub fn from_tensors(tensors: Vec<SymTensor>) -> Self {
        CumulantSeries { tensors }
    }

    pub fn max_order(&self) -> usize {
        self.tensors.len()
    }

    /// Cumulant tensor of order `s` (1-based).
    pub fn get(&self, s: usize) -> Option<&SymTensor> {
        s.checked_sub(1).and_then(|k| self.tensors.get(k))
    }

    pub fn tensors(&self) -> &[SymTensor] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<SymTensor> {
        self.tensors
    }
}

/// Symmetrized outer product element `A_i` of order `i.len()` from the
/// cumulants of orders `1..i.len()-1`, given in `lower` (order 1 first).
pub fn sym_outer_element(idx: &[usize], lower: &[SymTensor]) -> Result<f64, CumulantsError> {
    let s = idx.len();
    if s == 0 {
        return Err(CumulantsError::WrongArity { s, got: 0 });
    }
    if lower.len() < s - 1 {
        return Err(CumulantsError::MissingLowerOrders { needed: s - 1, given: lower.len() });
    }
    for (k, t) in lower[..s - 1].iter().enumerate() {
        if t.order() != k + 1 {
            return Err(CumulantsError::MissingLowerOrders { needed: s - 1, given: k });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.dim()) {
            return Err(SymTensorError::IndexOutOfRange { index: vec![bad], dim: t.dim() }.into());
        }
    }
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    Ok(PartitionTemplate::new(s).outer_element(&sorted, lower))
}

/// Cumulants of orders `1..=d` from moments of the same orders.
pub fn moms2cums(m: &MomentSeries) -> CumulantSeries {
    let d = m.max_order();
    let b = m.block_size();
    let mut out: Vec<SymTensor> = Vec::with_capacity(d);
    out.push(m.tensors()[0].clone());
    for s in 2..=d {
        let template = PartitionTemplate::new(s);
        debug_assert_eq!(template.s, s);
        let moments = &m.tensors()[s - 1];
        let mut c = moments.clone();
        let lower = &out[..];
        par::for_each(c.blocks_mut(), |(info, block)| {
            let mut local = vec![0usize; s];
            let mut idx = vec![0usize; s];
            for v in block.iter_mut() {
                for k in 0..s {
                    idx[k] = info.index[k] * b + local[k];
                }
                // within a diagonal block the global index need not be sorted
                idx.sort_unstable();
                *v -= template.outer_element(&idx, lower);
                increment_odometer_extents(&mut local, &info.extents);
            }
        });
        out.push(c);
    }
    CumulantSeries { tensors: out }
}

/// Direct recalculation: moments of `x` followed by [`moms2cums`].
pub fn cumulant_series(x: &DataBatch, d: usize, block_size: usize) -> Result<CumulantSeries, CumulantsError> {
    Ok(moms2cums(&moment_series(x, d, block_size)?))
}
