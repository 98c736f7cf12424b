//! Dense reference implementations used as independent oracles. Nothing in
//! here touches the block structure or the library's partition enumerator.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cumstream::data::DataBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> DataBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
    DataBatch::new(rows, cols, data).unwrap()
}

/// Every partition of `{0..s}` found by mapping each element to a label in
/// `0..s`, canonicalizing the induced grouping and removing duplicates.
pub fn brute_partitions(s: usize) -> Vec<Vec<Vec<usize>>> {
    let mut seen = BTreeSet::new();
    let total = s.pow(s as u32);
    for code in 0..total {
        let mut labels = vec![0usize; s];
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % s;
            c /= s;
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); s];
        for (pos, &l) in labels.iter().enumerate() {
            groups[l].push(pos);
        }
        let mut parts: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
        parts.sort();
        seen.insert(parts);
    }
    seen.into_iter().collect()
}

/// Dense tensor as a flat vector with `n^d` entries.
#[derive(Clone, Debug)]
pub struct Dense {
    pub d: usize,
    pub n: usize,
    pub v: Vec<f64>,
}

impl Dense {
    pub fn at(&self, idx: &[usize]) -> f64 {
        self.v[idx.iter().fold(0, |a, &i| a * self.n + i)]
    }
}

pub fn all_indices(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(n.pow(d as u32));
    let mut idx = vec![0usize; d];
    for _ in 0..n.pow(d as u32) {
        out.push(idx.clone());
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Raw moment by direct summation over samples.
pub fn naive_moments(x: &DataBatch, d: usize) -> Dense {
    let n = x.cols();
    let v = all_indices(n, d)
        .iter()
        .map(|idx| {
            let mut s = 0.0;
            for l in 0..x.rows() {
                let row = x.row(l);
                s += idx.iter().map(|&i| row[i]).product::<f64>();
            }
            s / x.rows() as f64
        })
        .collect();
    Dense { d, n, v }
}

fn partition_sum(idx: &[usize], lower: &[Dense], include_whole: bool, parts_list: &[Vec<Vec<usize>>]) -> f64 {
    parts_list
        .iter()
        .filter(|p| include_whole || p.len() > 1)
        .map(|parts| {
            parts
                .iter()
                .map(|part| {
                    let sub: Vec<usize> = part.iter().map(|&p| idx[p]).collect();
                    lower[part.len() - 1].at(&sub)
                })
                .product::<f64>()
        })
        .sum()
}

/// Cumulants of orders `1..=d` from dense moments, via brute-force partitions.
pub fn dense_moms2cums(moments: &[Dense]) -> Vec<Dense> {
    let mut out: Vec<Dense> = Vec::new();
    for m in moments {
        let parts = brute_partitions(m.d);
        let v = all_indices(m.n, m.d)
            .iter()
            .map(|idx| m.at(idx) - partition_sum(idx, &out, false, &parts))
            .collect();
        out.push(Dense { d: m.d, n: m.n, v });
    }
    out
}

/// Moments from cumulants: `m_i = sum over all partitions of prod c_parts`.
pub fn dense_cums2moms(cumulants: &[Dense]) -> Vec<Dense> {
    let mut out = Vec::new();
    for (k, c) in cumulants.iter().enumerate() {
        let parts = brute_partitions(c.d);
        let v = all_indices(c.n, c.d)
            .iter()
            .map(|idx| partition_sum(idx, &cumulants[..=k], true, &parts))
            .collect();
        out.push(Dense { d: c.d, n: c.n, v });
    }
    out
}

pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}
