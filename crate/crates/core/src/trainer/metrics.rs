use alloc::vec::Vec;

use crate::datasets::Setting;
use crate::vbs::LayerSparsity;

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub setting: Setting,
    /// Names of the evaluation splits (columns of `accuracy`).
    pub splits: Vec<alloc::string::String>,
    /// `accuracy[k][t]`: accuracy on split `t` at evaluation checkpoint `k`.
    /// With task boundaries checkpoint `k` is the end of phase `k`.
    pub accuracy: Vec<Vec<f64>>,
    /// Training step at each checkpoint.
    pub checkpoint_steps: Vec<u64>,
    /// Mean of the final row of `accuracy`.
    pub average_accuracy: f64,
    /// Per split: best accuracy after it was first trained on, minus final accuracy.
    pub forgetting: Vec<f64>,
    /// Gate statistics at each checkpoint (empty rows for ungated models).
    pub sparsity: Vec<Vec<LayerSparsity>>,
    pub steps: u64,
    pub stale_refreshes: u64,
}

impl RunMetrics {
    pub fn final_accuracy(&self) -> &[f64] {
        self.accuracy.last().map_or(&[], Vec::as_slice)
    }

    pub fn mean_forgetting(&self) -> f64 {
        if self.forgetting.is_empty() {
            0.0
        } else {
            self.forgetting.iter().sum::<f64>() / self.forgetting.len() as f64
        }
    }

    /// Pruned fraction at the last checkpoint.
    pub fn final_pruned_fraction(&self) -> f64 {
        self.sparsity.last().map_or(0.0, |r| crate::vbs::pruned_fraction(r))
    }
}

/// `F_t = max_{k ≥ first_k(t)} A[k][t] − A[last][t]`.
///
/// With boundaries, split `t` counts from checkpoint `t` (the end of its own
/// phase); without boundaries every checkpoint counts. Always ≥ 0 since the
/// final checkpoint is part of the maximum.
pub fn forgetting(accuracy: &[Vec<f64>], with_boundaries: bool) -> Vec<f64> {
    let Some(last) = accuracy.last() else {
        return Vec::new();
    };
    (0..last.len())
        .map(|t| {
            let from = if with_boundaries { t.min(accuracy.len() - 1) } else { 0 };
            let best = accuracy[from..]
                .iter()
                .map(|row| row[t])
                .fold(f64::NEG_INFINITY, f64::max);
            best - last[t]
        })
        .collect()
}
