mod common;

use approx::assert_relative_eq;
use common::{all_indices, random_batch};
use cumstream::cumulants::cumulant_series;
use cumstream::moments::{combine, moment_series, moment_series_chunked};
use cumstream::stream::{StreamConfig, WindowState};
use cumstream::symten::{block_multiplicity, SymTensor};
use proptest::prelude::*;

fn random_tensor(order: usize, dim: usize, b: usize, seed: u64) -> SymTensor {
    let x = random_batch(5, dim, seed);
    let m = moment_series(&x, order, b).unwrap();
    m.get(order).unwrap().clone()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn permuted_indices_agree(d in 1usize..=5, n in 1usize..=8, b in 1usize..=3, seed in any::<u64>(), rot in 0usize..5) {
        let t = random_tensor(d, n, b.min(n), seed);
        for idx in all_indices(n, d).into_iter().step_by(7) {
            let mut other = idx.clone();
            other.rotate_left(rot % d);
            other.reverse();
            prop_assert_eq!(t.get(&idx).unwrap(), t.get(&other).unwrap());
        }
    }

    #[test]
    fn knorm_matches_dense(d in 1usize..=5, n in 1usize..=8, b in 1usize..=3, seed in any::<u64>()) {
        let t = random_tensor(d, n, b.min(n), seed);
        let dense = t.densify();
        for k in [1.0, 2.0, 3.0] {
            let want = dense.data.iter().map(|v| v.abs().powf(k)).sum::<f64>().powf(1.0 / k);
            assert_relative_eq!(t.knorm(k), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn multiplicities_sum_to_full_grid(d in 1usize..=5, n in 1usize..=8, b in 1usize..=3) {
        let t = SymTensor::zeros(d, n, b.min(n)).unwrap();
        let covered: u64 = t
            .blocks()
            .iter()
            .map(|info| block_multiplicity(&info.index).unwrap() * info.len as u64)
            .sum();
        prop_assert_eq!(covered, (n as u64).pow(d as u32));
    }

    #[test]
    fn chunked_moments_match_single_pass(rows in 4usize..60, parts in 1usize..6, seed in any::<u64>()) {
        let x = random_batch(rows, 3, seed);
        let whole = moment_series(&x, 4, 2).unwrap();
        let chunked = moment_series_chunked(&x, 4, 2, parts).unwrap();
        for (a, c) in whole.tensors().iter().zip(chunked.tensors()) {
            for (p, q) in a.as_slice().iter().zip(c.as_slice()) {
                prop_assert!((p - q).abs() <= 1e-13 * (1.0 + p.abs()));
            }
        }
    }

    #[test]
    fn combine_is_associative(r1 in 1usize..30, r2 in 1usize..30, r3 in 1usize..30, seed in any::<u64>()) {
        let parts: Vec<_> = [r1, r2, r3]
            .iter()
            .enumerate()
            .map(|(k, &r)| (moment_series(&random_batch(r, 3, seed ^ k as u64), 3, 2).unwrap(), r))
            .collect();
        let (a, b, c) = (&parts[0], &parts[1], &parts[2]);
        let left = combine(&combine(&a.0, a.1, &b.0, b.1).unwrap(), a.1 + b.1, &c.0, c.1).unwrap();
        let right = combine(&a.0, a.1, &combine(&b.0, b.1, &c.0, c.1).unwrap(), b.1 + c.1).unwrap();
        for (p, q) in left.tensors().iter().zip(right.tensors()) {
            for (u, v) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((u - v).abs() <= 1e-13 * (1.0 + u.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn updates_agree_with_recomputation(t_up in 1usize..12, n in 1usize..5, seed in any::<u64>()) {
        let t = 60;
        let cfg = StreamConfig::new(n, 4, t, t_up, 2.min(n)).unwrap().with_resync(0);
        let mut st = WindowState::prime(cfg, &random_batch(t, n, seed)).unwrap();
        let mut last = None;
        for k in 0..100u64 {
            last = Some(st.step(&random_batch(t_up, n, seed.wrapping_add(k + 1))).unwrap());
        }
        let want = cumulant_series(&st.buffer().contents(), 4, 2.min(n)).unwrap();
        for (a, w) in last.unwrap().tensors().iter().zip(want.tensors()) {
            for (p, q) in a.as_slice().iter().zip(w.as_slice()) {
                prop_assert!((p - q).abs() / q.abs().max(1.0) < 1e-8);
            }
        }
    }
}
