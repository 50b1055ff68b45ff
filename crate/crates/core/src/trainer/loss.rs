use alloc::vec::Vec;

use super::LossWeights;
use crate::error::{Error, Result};
use crate::nd::{Graph, NodeId, Tensor};

/// Mean CE of the current-task samples. Returns the loss node and per-sample CE.
pub fn loss_current(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<(NodeId, Vec<f64>)> {
    g.softmax_cross_entropy(logits, labels)
}

/// Mean CE of replayed samples; same functional as [`loss_current`].
pub fn loss_memory_ce(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<(NodeId, Vec<f64>)> {
    g.softmax_cross_entropy(logits, labels)
}

fn stacked<R: AsRef<[f64]>>(rows: &[R]) -> Result<Tensor> {
    Tensor::from_rows(rows)
}

/// Batch mean of `‖z − ẑ‖²` against stored logits.
pub fn loss_fer_z<R: AsRef<[f64]>>(g: &mut Graph, logits: NodeId, z_hats: &[R]) -> Result<NodeId> {
    let target = stacked(z_hats)?;
    let sq = g.sum_sq_diff(logits, &target)?;
    Ok(g.scale(sq, 1.0 / z_hats.len() as f64))
}

/// Batch mean of `Σ_l Σ_c (h_{l,c} − ĥ_{l,c})²` over every gated layer.
///
/// `h_hats[i][l]` is the stored activation of sample `i` at layer `l`.
pub fn loss_fer_h<S: AsRef<[Vec<f64>]>>(g: &mut Graph, features: &[NodeId], h_hats: &[S]) -> Result<NodeId> {
    let n = h_hats.len();
    if n == 0 {
        return Err(Error::input("feature replay needs at least one stored item"));
    }
    let mut total: Option<NodeId> = None;
    for (l, &f) in features.iter().enumerate() {
        let mut rows = Vec::with_capacity(n);
        for item in h_hats {
            let layers = item.as_ref();
            if layers.len() != features.len() {
                return Err(Error::dim("loss_fer_h", &[features.len()], &[layers.len()]));
            }
            rows.push(layers[l].as_slice());
        }
        let target = stacked(&rows)?;
        let sq = g.sum_sq_diff(f, &target)?;
        total = Some(match total {
            Some(t) => g.add(t, sq)?,
            None => sq,
        });
    }
    let total = total.ok_or_else(|| Error::input("feature replay needs at least one layer"))?;
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Loss components of one step; absent terms contribute nothing.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub current: NodeId,
    pub memory_ce: Option<NodeId>,
    pub fer_z: Option<NodeId>,
    pub fer_h: Option<NodeId>,
    pub vbs: Option<NodeId>,
}

/// `L = L_CE + η L_VBS + α L_CE-M + β L_FER-z + γ L_FER-h`. Terms with zero
/// weight are left out of the graph, so they add no gradient at all.
pub fn total_loss(g: &mut Graph, terms: LossTerms, w: &LossWeights) -> Result<NodeId> {
    w.validate()?;
    let mut total = terms.current;
    for (term, weight) in [
        (terms.vbs, w.eta),
        (terms.memory_ce, w.alpha),
        (terms.fer_z, w.beta),
        (terms.fer_h, w.gamma),
    ] {
        if let (Some(t), true) = (term, weight > 0.0) {
            let scaled = g.scale(t, weight);
            total = g.add(total, scaled)?;
        }
    }
    Ok(total)
}
