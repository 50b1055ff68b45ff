//! Full-experience replay memory.
//!
//! Each [`MemoryItem`] keeps the input, its label and what the model produced
//! for it at observation time: logits and every gated hidden activation. Two
//! update rules are provided: classic reservoir sampling and loss-aware
//! reservoir sampling, which rebuilds a full buffer with class-balanced quotas
//! and picks each class's items at even strides over its loss-sorted
//! candidates.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::model::GatedMlp;
use crate::nd::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    /// Unique, monotonically assigned id of the observation.
    pub id: u64,
    pub x: Vec<f64>,
    pub y: usize,
    pub z_hat: Vec<f64>,
    pub h_hat: Vec<Vec<f64>>,
    pub stored_loss: f64,
    pub insert_step: u64,
}

/// Captures memory items for a batch of observations.
///
/// Runs one Deterministic forward of `x` (`[B×D]`) with the current
/// parameters and stores logits and gated features as plain values.
pub fn capture(
    model: &GatedMlp,
    x: &Tensor,
    ys: &[usize],
    per_sample_loss: &[f64],
    insert_step: u64,
    next_id: &mut u64,
) -> Result<Vec<MemoryItem>> {
    let b = x.rows();
    if ys.len() != b || per_sample_loss.len() != b || x.shape().len() != 2 {
        return Err(Error::dim("capture", x.shape(), &[ys.len(), per_sample_loss.len()]));
    }
    if let Some(l) = per_sample_loss.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::input(alloc::format!("stored loss must be finite and ≥ 0, got {l}")));
    }
    let inf = model.infer(x)?;
    Ok((0..b)
        .map(|i| {
            let id = *next_id;
            *next_id += 1;
            MemoryItem {
                id,
                x: x.row(i).to_vec(),
                y: ys[i],
                z_hat: inf.logits.row(i).to_vec(),
                h_hat: inf.features.iter().map(|f| f.row(i).to_vec()).collect(),
                stored_loss: per_sample_loss[i],
                insert_step,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<MemoryItem>,
    seen: u64,
    stale_refreshes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
            stale_refreshes: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    /// Number of items offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Refresh requests that named an item no longer in the buffer.
    pub fn stale_refreshes(&self) -> u64 {
        self.stale_refreshes
    }

    /// Classic reservoir sampling: while unfilled every item is stored; then
    /// the `n`-th offer replaces a uniformly random slot with probability
    /// `M / n` and is discarded otherwise.
    pub fn reservoir_update<R: RngCore + ?Sized>(&mut self, item: MemoryItem, rng: &mut R) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = rng.random_range(0..self.seen);
            if j < self.capacity as u64 {
                self.items[j as usize] = item;
            }
        }
    }

    /// Loss-aware reservoir update with the whole incoming set.
    ///
    /// Below capacity the items are appended in arrival order until the buffer
    /// is full. Otherwise the buffer is rebuilt from `buffer ∪ batch`: every
    /// class `r` among the `R` present gets `⌊M/R⌋` slots, spare slots (from
    /// the remainder or from classes short of candidates) go one at a time to
    /// the classes with the most candidates, and each class fills its slots by
    /// taking indices `⌊i·|S_r|/q_r⌋` of its candidates sorted by ascending
    /// loss.
    pub fn lrs_update(&mut self, batch: Vec<MemoryItem>) -> Result<()> {
        self.seen += batch.len() as u64;
        let mut incoming = batch.into_iter();
        if self.items.len() < self.capacity {
            let room = self.capacity - self.items.len();
            self.items.extend(incoming.by_ref().take(room));
            return Ok(());
        }
        let mut pool = core::mem::take(&mut self.items);
        pool.extend(incoming);
        self.items = select_loss_aware(pool, self.capacity)?;
        Ok(())
    }

    /// Loss-aware update on the subset of `batch` that passes the classic
    /// reservoir coin (item `n` of the stream enters with probability `M/n`),
    /// so old items leave the memory at the reservoir rate instead of being
    /// re-ranked against every incoming batch.
    pub fn lrs_update_admitted<R: RngCore + ?Sized>(&mut self, batch: Vec<MemoryItem>, rng: &mut R) -> Result<()> {
        let mut admitted = Vec::new();
        for item in batch {
            self.seen += 1;
            let has_room = self.items.len() + admitted.len() < self.capacity;
            if has_room || rng.random_range(0..self.seen) < self.capacity as u64 {
                admitted.push(item);
            }
        }
        if admitted.is_empty() {
            return Ok(());
        }
        let seen = self.seen;
        self.lrs_update(admitted)?;
        self.seen = seen;
        Ok(())
    }

    /// Indices of `n` items drawn uniformly, without replacement unless `n`
    /// exceeds the buffer size. `None` means there is nothing to replay.
    pub fn sample_replay_batch<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<usize>> {
        if self.items.is_empty() || n == 0 {
            return None;
        }
        let len = self.items.len();
        Some(if n <= len {
            index::sample(rng, len, n).into_vec()
        } else {
            (0..n).map(|_| rng.random_range(0..len)).collect()
        })
    }

    /// Overwrites the stored loss of each listed item id. Ids no longer in the
    /// buffer are skipped and counted in [`stale_refreshes`](Self::stale_refreshes).
    pub fn refresh_loss(&mut self, ids: &[u64], losses: &[f64]) -> Result<()> {
        if ids.len() != losses.len() {
            return Err(Error::dim("refresh_loss", &[ids.len()], &[losses.len()]));
        }
        let slots: BTreeMap<u64, usize> = self.items.iter().enumerate().map(|(i, it)| (it.id, i)).collect();
        for (id, &loss) in ids.iter().zip(losses) {
            if !(loss.is_finite() && loss >= 0.0) {
                return Err(Error::input(alloc::format!("refreshed loss must be finite and ≥ 0, got {loss}")));
            }
            match slots.get(id) {
                Some(&i) => self.items[i].stored_loss = loss,
                None => self.stale_refreshes += 1,
            }
        }
        Ok(())
    }

    /// Per-class item counts.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for it in &self.items {
            *counts.entry(it.y).or_insert(0) += 1;
        }
        counts
    }
}

/// Total order used by the loss sort: loss, then insert step, then class, then id.
fn loss_order(a: &MemoryItem, b: &MemoryItem) -> Ordering {
    a.stored_loss
        .total_cmp(&b.stored_loss)
        .then(a.insert_step.cmp(&b.insert_step))
        .then(a.y.cmp(&b.y))
        .then(a.id.cmp(&b.id))
}

/// Per-class slot allotment: `⌊M/R⌋` each, capped by candidates, with the
/// spare slots handed out one per class in descending candidate count.
pub fn lrs_quotas(class_sizes: &BTreeMap<usize, usize>, capacity: usize) -> Result<BTreeMap<usize, usize>> {
    if capacity == 0 {
        return Err(Error::config("replay buffer capacity must be positive"));
    }
    let r = class_sizes.len();
    if r == 0 {
        return Ok(BTreeMap::new());
    }
    let base = capacity / r;
    let mut quotas: BTreeMap<usize, usize> = class_sizes.iter().map(|(&c, &n)| (c, base.min(n))).collect();
    let mut leftover = capacity - quotas.values().sum::<usize>();

    let mut order: Vec<(usize, usize)> = class_sizes.iter().map(|(&c, &n)| (c, n)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    while leftover > 0 {
        let mut progressed = false;
        for &(c, n) in &order {
            if leftover == 0 {
                break;
            }
            let q = quotas.get_mut(&c).expect("class present");
            if *q < n {
                *q += 1;
                leftover -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(quotas)
}

/// Stride picks `⌊i·n/q⌋`, `i = 0..q`, over a sorted candidate list of length `n`.
pub fn stride_indices(n: usize, q: usize) -> Vec<usize> {
    debug_assert!(q <= n);
    (0..q).map(|i| i * n / q).collect()
}

fn select_loss_aware(pool: Vec<MemoryItem>, capacity: usize) -> Result<Vec<MemoryItem>> {
    let mut by_class: BTreeMap<usize, Vec<MemoryItem>> = BTreeMap::new();
    for it in pool {
        by_class.entry(it.y).or_default().push(it);
    }
    let sizes = by_class.iter().map(|(&c, v)| (c, v.len())).collect();
    let quotas = lrs_quotas(&sizes, capacity)?;
    let mut out = Vec::with_capacity(capacity);
    for (class, mut candidates) in by_class {
        candidates.sort_by(loss_order);
        let q = quotas[&class];
        let picks = stride_indices(candidates.len(), q);
        let mut slots: Vec<Option<MemoryItem>> = candidates.into_iter().map(Some).collect();
        out.extend(picks.into_iter().map(|i| slots[i].take().expect("stride picks are distinct")));
    }
    Ok(out)
}
