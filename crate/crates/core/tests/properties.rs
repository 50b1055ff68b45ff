use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sncl_core::model::{argmax_rows, masked_logits};
use sncl_core::nd::{Graph, Tensor};
use sncl_core::replay::{lrs_quotas, stride_indices, MemoryItem, ReplayBuffer};

fn item(id: u64, y: usize, loss: f64, step: u64) -> MemoryItem {
    MemoryItem {
        id,
        x: vec![id as f64],
        y,
        z_hat: vec![0.0; 2],
        h_hat: vec![vec![0.0; 2]; 2],
        stored_loss: loss,
        insert_step: step,
    }
}

/// Fills a buffer to capacity with `old`, then runs one LRS update with `new`.
fn lrs_after(cap: usize, old: &[(usize, f64)], new: &[(usize, f64)]) -> (ReplayBuffer, Vec<MemoryItem>) {
    let mut buf = ReplayBuffer::new(cap).unwrap();
    let old_items: Vec<MemoryItem> = old.iter().enumerate().map(|(i, &(y, l))| item(i as u64, y, l, 0)).collect();
    buf.lrs_update(old_items.clone()).unwrap();
    let mut pool: Vec<MemoryItem> = buf.items().to_vec();
    let new_items: Vec<MemoryItem> = new
        .iter()
        .enumerate()
        .map(|(i, &(y, l))| item(1000 + i as u64, y, l, 1))
        .collect();
    pool.extend(new_items.iter().cloned());
    buf.lrs_update(new_items).unwrap();
    (buf, pool)
}

fn class_loss() -> impl Strategy<Value = (usize, f64)> {
    // coarse losses so ties actually happen
    (0usize..5, (0u32..20).prop_map(|v| v as f64 * 0.25))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cross_entropy_is_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 4), 1..6),
        c in -50.0f64..50.0,
        seed in 0usize..4,
    ) {
        let labels: Vec<usize> = (0..rows.len()).map(|i| (i + seed) % 4).collect();
        let t = Tensor::from_rows(&rows).unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
        let ts = Tensor::from_rows(&shifted).unwrap();
        let mut g = Graph::new();
        let a = g.leaf(&t);
        let b = g.leaf(&ts);
        let (la, pa) = g.softmax_cross_entropy(a, &labels).unwrap();
        let (lb, pb) = g.softmax_cross_entropy(b, &labels).unwrap();
        prop_assert!((g.scalar(la) - g.scalar(lb)).abs() < 1e-10);
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!((x - y).abs() < 1e-10);
            prop_assert!(*x >= 0.0);
        }
    }

    #[test]
    fn lrs_postconditions(
        cap in 1usize..30,
        old in prop::collection::vec(class_loss(), 30..40),
        new in prop::collection::vec(class_loss(), 0..20),
    ) {
        let (buf, pool) = lrs_after(cap, &old, &new);
        prop_assert!(buf.len() <= cap);
        prop_assert_eq!(buf.len(), cap.min(pool.len()));

        let ids: BTreeSet<u64> = buf.items().iter().map(|i| i.id).collect();
        prop_assert_eq!(ids.len(), buf.len());
        let pool_ids: BTreeSet<u64> = pool.iter().map(|i| i.id).collect();
        prop_assert!(ids.is_subset(&pool_ids));

        let mut by_class: BTreeMap<usize, Vec<&MemoryItem>> = BTreeMap::new();
        for it in &pool {
            by_class.entry(it.y).or_default().push(it);
        }
        let counts = buf.class_counts();
        let r = by_class.len();
        let need = cap.div_ceil(r);
        if by_class.values().all(|s| s.len() >= need) {
            let lo = counts.values().min().copied().unwrap_or(0);
            let hi = counts.values().max().copied().unwrap_or(0);
            prop_assert!(hi - lo <= 1, "counts {:?}", counts);
            prop_assert_eq!(counts.len(), r.min(cap));
        }
        for (y, cands) in &by_class {
            let kept: Vec<&MemoryItem> = buf.items().iter().filter(|i| i.y == *y).collect();
            if kept.is_empty() {
                continue;
            }
            let min = cands.iter().map(|i| i.stored_loss).fold(f64::INFINITY, f64::min);
            prop_assert!(kept.iter().any(|i| i.stored_loss == min), "class {} lost its minimum", y);
            prop_assert!(kept.windows(2).all(|w| w[0].stored_loss <= w[1].stored_loss));
        }

        // same inputs, same memory
        let (again, _) = lrs_after(cap, &old, &new);
        prop_assert_eq!(again.items(), buf.items());
    }

    #[test]
    fn buffer_never_exceeds_capacity(cap in 1usize..20, batches in prop::collection::vec(prop::collection::vec(class_loss(), 0..12), 1..15)) {
        let mut lrs = ReplayBuffer::new(cap).unwrap();
        let mut res = ReplayBuffer::new(cap).unwrap();
        let mut rng = sncl_core::seeded_rng(cap as u64);
        let mut id = 0;
        for b in batches {
            let items: Vec<MemoryItem> = b.iter().map(|&(y, l)| { id += 1; item(id, y, l, id) }).collect();
            for it in items.iter().cloned() {
                res.reservoir_update(it, &mut rng);
            }
            lrs.lrs_update(items).unwrap();
            prop_assert!(lrs.len() <= cap && res.len() <= cap);
        }
        prop_assert_eq!(lrs.len(), cap.min(id as usize));
        prop_assert_eq!(res.len(), cap.min(id as usize));
        prop_assert_eq!(res.seen(), id);
    }

    #[test]
    fn quotas_fill_capacity_when_possible(sizes in prop::collection::btree_map(0usize..8, 0usize..10, 1..6), cap in 1usize..40) {
        let q = lrs_quotas(&sizes, cap).unwrap();
        let total: usize = sizes.values().sum();
        prop_assert_eq!(q.values().sum::<usize>(), cap.min(total));
        for (c, n) in &sizes {
            prop_assert!(q.get(c).copied().unwrap_or(0) <= *n);
        }
    }

    #[test]
    fn stride_starts_at_minimum_and_is_strictly_increasing(n in 1usize..60, q in 1usize..60) {
        let q = q.min(n);
        let idx = stride_indices(n, q);
        prop_assert_eq!(idx.len(), q);
        prop_assert_eq!(idx[0], 0);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*idx.last().unwrap() < n);
    }

    #[test]
    fn two_class_mask_restricts_argmax(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 10), 1..8), a in 0usize..10, b in 0usize..10) {
        prop_assume!(a != b);
        let t = Tensor::from_rows(&rows).unwrap();
        let m = masked_logits(&t, &[a, b]).unwrap();
        for (row, p) in rows.iter().zip(argmax_rows(&m)) {
            let want = if row[b] > row[a] || (row[b] == row[a] && b < a) { b } else { a };
            prop_assert_eq!(p, want);
        }
    }
}

#[test]
fn hand_simulated_examples() {
    // M=4, two classes with losses {1,2,3,4} each → keep {1,3} per class
    let mut buf = ReplayBuffer::new(4).unwrap();
    buf.lrs_update(vec![item(0, 0, 1.0, 0), item(1, 0, 2.0, 0), item(2, 1, 1.0, 0), item(3, 1, 2.0, 0)]).unwrap();
    buf.lrs_update(vec![item(4, 0, 3.0, 1), item(5, 0, 4.0, 1), item(6, 1, 3.0, 1), item(7, 1, 4.0, 1)]).unwrap();
    let mut kept: Vec<(usize, f64)> = buf.items().iter().map(|i| (i.y, i.stored_loss)).collect();
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(kept, vec![(0, 1.0), (0, 3.0), (1, 1.0), (1, 3.0)]);

    // 3 classes into M=4 → 1 each plus one to the largest class
    let sizes: BTreeMap<usize, usize> = [(0, 2), (1, 5), (2, 3)].into_iter().collect();
    let q = lrs_quotas(&sizes, 4).unwrap();
    assert_eq!(q.values().copied().collect::<Vec<_>>(), vec![1, 2, 1]);
}
