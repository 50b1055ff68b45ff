//! Variational Bayesian sparsity gates.
//!
//! Every hidden neuron `c` of layer `l` carries a multiplicative gate `τ` with
//! posterior `N(μ, λμ²)`. The gate parameters are `μ` and `a = ln λ`, so
//! `λ = eᵃ` stays positive. The regularizer `0.5 Σ ln(1 + λ⁻¹)` pushes
//! `λ⁻¹` towards zero; a neuron whose `λ⁻¹` falls under the prune threshold
//! is masked to zero in deterministic forward passes.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nd::{Graph, NodeId, Tensor};

/// Initial posterior mean: identity gates.
pub const INIT_MU: f64 = 1.0;
/// Initial `λ` (so `λ⁻¹ = 100`, far from the prune region).
pub const INIT_LAMBDA: f64 = 1e-2;
/// Default prune threshold on `λ⁻¹`.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;
/// Default upper clip on `ln λ`. Keeps the noise scale `√λ` under 5 while
/// still reaching `λ⁻¹ = e^-3.2 ≈ 0.041`, inside the default prune region.
pub const DEFAULT_LOG_LAMBDA_MAX: f64 = 3.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateMode {
    /// Reparameterized draw from the posterior; training only.
    Sample,
    /// Gate equals its posterior mean, with pruned channels forced to zero.
    #[default]
    Deterministic,
}

/// How many noise draws a Sample-mode gate uses per mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScope {
    /// One `ε` per channel, shared by every row of the batch.
    #[default]
    PerBatch,
    /// An independent `ε` per row and channel.
    PerSample,
}

/// Posterior parameters of one gated layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    layer: usize,
    pub mu: Tensor,
    pub log_lambda: Tensor,
}

/// Graph handles of a bound [`GateParams`].
#[derive(Debug, Clone, Copy)]
pub struct GateNodes {
    pub mu: NodeId,
    pub log_lambda: NodeId,
}

impl GateParams {
    pub fn new(layer: usize, channels: usize) -> Result<Self> {
        Self::with_values(
            layer,
            vec![INIT_MU; channels],
            vec![libm::log(INIT_LAMBDA); channels],
        )
    }

    pub fn with_values(layer: usize, mu: Vec<f64>, log_lambda: Vec<f64>) -> Result<Self> {
        if mu.len() != log_lambda.len() {
            return Err(Error::dim("gate params", &[mu.len()], &[log_lambda.len()]));
        }
        let c = mu.len();
        Ok(GateParams {
            layer,
            mu: Tensor::parameter(&[c], mu)?,
            log_lambda: Tensor::parameter(&[c], log_lambda)?,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// `λ⁻¹ = e^{-a}` per channel.
    /// Clips every `ln λ` to at most `max`.
    pub fn clip_log_lambda(&mut self, max: f64) {
        for a in self.log_lambda.data_mut() {
            *a = a.min(max);
        }
    }

    pub fn inverse_lambda(&self) -> Vec<f64> {
        self.log_lambda.data().iter().map(|a| libm::exp(-a)).collect()
    }

    pub fn bind(&self, g: &mut Graph) -> GateNodes {
        GateNodes {
            mu: g.leaf(&self.mu),
            log_lambda: g.leaf(&self.log_lambda),
        }
    }
}

/// Applies the gates of one layer to `h_tilde` (`[B×C]`).
///
/// Deterministic: `h = h̃ ⊙ μ`, with channels listed in `pruned` zeroed.
/// Sample: `g = μ (1 + √λ ε)`, `ε ~ N(0, 1)`, and `h = h̃ ⊙ g`; gradients reach
/// both `μ` and `ln λ` through `g`.
pub fn gate_forward<R: RngCore + ?Sized>(
    g: &mut Graph,
    h_tilde: NodeId,
    gates: GateNodes,
    mode: GateMode,
    pruned: Option<&[bool]>,
    scope: NoiseScope,
    rng: &mut R,
) -> Result<NodeId> {
    let c = g.shape(gates.mu)[0];
    let shape = g.shape(h_tilde).to_vec();
    if shape.len() != 2 || shape[1] != c {
        return Err(Error::dim("gate_forward", &shape, &[c]));
    }
    match mode {
        GateMode::Deterministic => {
            let effective = match pruned {
                Some(mask) if mask.iter().any(|&p| p) => {
                    if mask.len() != c {
                        return Err(Error::dim("gate_forward", &[c], &[mask.len()]));
                    }
                    let keep = mask.iter().map(|&p| if p { 0.0 } else { 1.0 }).collect();
                    let keep = g.constant(&[c], keep)?;
                    g.mul(gates.mu, keep)?
                }
                _ => gates.mu,
            };
            g.mul(h_tilde, effective)
        }
        GateMode::Sample => {
            let eps_shape: Vec<usize> = match scope {
                NoiseScope::PerBatch => vec![c],
                NoiseScope::PerSample => shape.clone(),
            };
            let n: usize = eps_shape.iter().product();
            let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let eps = g.constant(&eps_shape, eps)?;
            let half = g.scale(gates.log_lambda, 0.5);
            let std_ratio = g.exp(half);
            let noise = g.mul(eps, std_ratio)?;
            let factor = g.add_scalar(noise, 1.0);
            let gate = g.mul(factor, gates.mu)?;
            g.mul(h_tilde, gate)
        }
    }
}

/// `0.5 Σ_l Σ_c ln(1 + λ⁻¹)`, built as `0.5 Σ softplus(−a)`.
pub fn vbs_loss(g: &mut Graph, gates: &[GateNodes]) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for nodes in gates {
        let neg = g.scale(nodes.log_lambda, -1.0);
        let sp = g.softplus(neg);
        let s = g.sum(sp);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = total.ok_or_else(|| Error::config("vbs_loss needs at least one gate layer"))?;
    Ok(g.scale(total, 0.5))
}

/// Plain-value counterpart of [`vbs_loss`].
pub fn vbs_value(gates: &[GateParams]) -> f64 {
    0.5 * gates
        .iter()
        .flat_map(|p| p.inverse_lambda())
        .map(libm::log1p)
        .sum::<f64>()
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::config("prune threshold must be positive and finite"))
    }
}

/// `true` marks a pruned channel: `λ⁻¹ < threshold`.
pub fn prune_mask(gates: &GateParams, threshold: f64) -> Result<Vec<bool>> {
    check_threshold(threshold)?;
    Ok(gates.inverse_lambda().into_iter().map(|v| v < threshold).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    pub layer: usize,
    pub active: usize,
    pub pruned: usize,
    pub mean_inverse_lambda: f64,
}

impl LayerSparsity {
    pub fn channels(&self) -> usize {
        self.active + self.pruned
    }
}

pub fn sparsity_report(gates: &[GateParams], threshold: f64) -> Result<Vec<LayerSparsity>> {
    gates
        .iter()
        .map(|p| {
            let mask = prune_mask(p, threshold)?;
            let pruned = mask.iter().filter(|&&m| m).count();
            let inv = p.inverse_lambda();
            Ok(LayerSparsity {
                layer: p.layer(),
                active: mask.len() - pruned,
                pruned,
                mean_inverse_lambda: inv.iter().sum::<f64>() / inv.len().max(1) as f64,
            })
        })
        .collect()
}

/// Fraction of pruned channels over every layer in a report.
pub fn pruned_fraction(report: &[LayerSparsity]) -> f64 {
    let total: usize = report.iter().map(LayerSparsity::channels).sum();
    if total == 0 {
        return 0.0;
    }
    report.iter().map(|r| r.pruned).sum::<usize>() as f64 / total as f64
}
