//! Gated two-hidden-layer MLP.
//!
//! `x → Linear → ReLU → gate → Linear → ReLU → gate → Linear → logits`.
//! The logits layer is never gated. The trace of a forward pass exposes the
//! logits and both gated hidden activations so that replay losses can match
//! them against stored targets.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::nd::{Gradients, Graph, NodeId, Tensor};
use crate::vbs::{self, GateMode, GateNodes, GateParams, NoiseScope};

pub const HIDDEN_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// When false the gates are bypassed entirely (plain MLP).
    pub gated: bool,
    pub prune_threshold: f64,
    pub noise: NoiseScope,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: usize, classes: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden,
            classes,
            gated: true,
            prune_threshold: vbs::DEFAULT_PRUNE_THRESHOLD,
            noise: NoiseScope::PerBatch,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(Error::config("mlp needs input_dim ≥ 1, hidden ≥ 1 and classes ≥ 2"));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold.is_finite()) {
            return Err(Error::config("prune threshold must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights in `±√(6 / (fan_in + fan_out))`, zero bias.
    fn glorot<R: RngCore + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Linear {
            weight: Tensor::parameter(&[fan_in, fan_out], w)?,
            bias: Tensor::parameter(&[fan_out], vec![0.0; fan_out])?,
        })
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Linear {
            weight: Tensor::parameter(&[fan_in, fan_out], vec![0.0; fan_in * fan_out])?,
            bias: Tensor::parameter(&[fan_out], vec![0.0; fan_out])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedMlp {
    config: MlpConfig,
    layers: [Linear; 3],
    gates: [GateParams; HIDDEN_LAYERS],
}

/// Graph handles of every parameter after [`GatedMlp::bind`].
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    layers: [(NodeId, NodeId); 3],
    gates: [GateNodes; HIDDEN_LAYERS],
}

impl BoundParams {
    pub fn gates(&self) -> &[GateNodes] {
        &self.gates
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `[B×K]` logits.
    pub logits: NodeId,
    /// Post-ReLU, post-gate activations `[B×H]`, one per hidden layer.
    pub features: Vec<NodeId>,
}

/// Plain-value result of a deterministic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub logits: Tensor,
    pub features: Vec<Tensor>,
}

impl GatedMlp {
    pub fn new<R: RngCore + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, h, k) = (config.input_dim, config.hidden, config.classes);
        let layers = [
            Linear::glorot(d, h, rng)?,
            Linear::glorot(h, h, rng)?,
            Linear::glorot(h, k, rng)?,
        ];
        let gates = [GateParams::new(0, h)?, GateParams::new(1, h)?];
        Ok(GatedMlp { config, layers, gates })
    }

    /// All weights and biases zero, gates at their initial values.
    pub fn zeroed(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let (d, h, k) = (config.input_dim, config.hidden, config.classes);
        let layers = [Linear::zeros(d, h)?, Linear::zeros(h, h)?, Linear::zeros(h, k)?];
        let gates = [GateParams::new(0, h)?, GateParams::new(1, h)?];
        Ok(GatedMlp { config, layers, gates })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear; 3] {
        &mut self.layers
    }

    pub fn gates(&self) -> &[GateParams] {
        &self.gates
    }

    pub fn gates_mut(&mut self) -> &mut [GateParams] {
        &mut self.gates
    }

    /// Trainable tensors in canonical order: `w1 b1 w2 b2 w3 b3 μ1 a1 μ2 a2`.
    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        let [l1, l2, l3] = &self.layers;
        let [g1, g2] = &self.gates;
        vec![
            ("w1", &l1.weight),
            ("b1", &l1.bias),
            ("w2", &l2.weight),
            ("b2", &l2.bias),
            ("w3", &l3.weight),
            ("b3", &l3.bias),
            ("mu1", &g1.mu),
            ("log_lambda1", &g1.log_lambda),
            ("mu2", &g2.mu),
            ("log_lambda2", &g2.log_lambda),
        ]
    }

    /// Mutable counterpart of [`named_params`](Self::named_params), same order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [l1, l2, l3] = &mut self.layers;
        let [g1, g2] = &mut self.gates;
        vec![
            &mut l1.weight,
            &mut l1.bias,
            &mut l2.weight,
            &mut l2.bias,
            &mut l3.weight,
            &mut l3.bias,
            &mut g1.mu,
            &mut g1.log_lambda,
            &mut g2.mu,
            &mut g2.log_lambda,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies every parameter into `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let l = &self.layers;
        BoundParams {
            layers: [
                (g.leaf(&l[0].weight), g.leaf(&l[0].bias)),
                (g.leaf(&l[1].weight), g.leaf(&l[1].bias)),
                (g.leaf(&l[2].weight), g.leaf(&l[2].bias)),
            ],
            gates: [self.gates[0].bind(g), self.gates[1].bind(g)],
        }
    }

    fn bound_ids(bound: &BoundParams) -> [NodeId; 10] {
        let [(w1, b1), (w2, b2), (w3, b3)] = bound.layers;
        let [g1, g2] = bound.gates;
        [w1, b1, w2, b2, w3, b3, g1.mu, g1.log_lambda, g2.mu, g2.log_lambda]
    }

    /// Folds the gradients of a backward pass into every parameter's buffer.
    pub fn accumulate_grads(&mut self, bound: &BoundParams, grads: &Gradients) -> Result<()> {
        let ids = Self::bound_ids(bound);
        for (t, id) in self.params_mut().into_iter().zip(ids) {
            if let Some(gv) = grads.get(id) {
                t.accumulate_grad(gv)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Per-layer prune masks; `None` when the model is ungated.
    pub fn prune_masks(&self) -> Result<Option<Vec<Vec<bool>>>> {
        if !self.config.gated {
            return Ok(None);
        }
        self.gates
            .iter()
            .map(|p| vbs::prune_mask(p, self.config.prune_threshold))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Forward pass of `x` (`[B×D]`) using parameters already bound in `g`.
    pub fn forward<R: RngCore + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        x: NodeId,
        mode: GateMode,
        rng: &mut R,
    ) -> Result<ForwardTrace> {
        let xs = g.shape(x);
        if xs.len() != 2 || xs[1] != self.config.input_dim {
            return Err(Error::dim("forward", xs, &[self.config.input_dim]));
        }
        let masks = match mode {
            GateMode::Deterministic => self.prune_masks()?,
            GateMode::Sample => None,
        };
        let mut h = x;
        let mut features = Vec::with_capacity(HIDDEN_LAYERS);
        for l in 0..HIDDEN_LAYERS {
            let (w, b) = bound.layers[l];
            let pre = g.matmul(h, w)?;
            let pre = g.add(pre, b)?;
            let act = g.relu(pre);
            h = if self.config.gated {
                let mask = masks.as_ref().map(|m| m[l].as_slice());
                vbs::gate_forward(g, act, bound.gates[l], mode, mask, self.config.noise, rng)?
            } else {
                act
            };
            features.push(h);
        }
        let (w, b) = bound.layers[2];
        let z = g.matmul(h, w)?;
        let logits = g.add(z, b)?;
        Ok(ForwardTrace { logits, features })
    }

    /// Deterministic forward of a batch, returned as plain tensors.
    pub fn infer(&self, x: &Tensor) -> Result<Inference> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xn = g.constant(x.shape(), x.data().to_vec())?;
        let trace = self.forward(&mut g, &bound, xn, GateMode::Deterministic, &mut NoRng)?;
        Ok(Inference {
            logits: g.tensor(trace.logits),
            features: trace.features.iter().map(|&f| g.tensor(f)).collect(),
        })
    }

    /// Argmax class of each row, Deterministic gating.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.infer(x)?.logits))
    }
}

/// Deterministic gates never draw noise.
struct NoRng;

impl RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic forward drew random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic forward drew random numbers")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic forward drew random numbers")
    }
}

/// Row-wise argmax; ties go to the lowest class id.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Sets every logit outside `allowed` to `−∞`.
pub fn masked_logits(logits: &Tensor, allowed: &[usize]) -> Result<Tensor> {
    let k = logits.cols();
    if allowed.is_empty() {
        return Err(Error::config("allowed class set is empty"));
    }
    if let Some(&c) = allowed.iter().find(|&&c| c >= k) {
        return Err(Error::config(alloc::format!("class {c} outside {k} logits")));
    }
    let mut keep = vec![false; k];
    allowed.iter().for_each(|&c| keep[c] = true);
    let mut out = logits.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if !keep[i % k] {
            *v = f64::NEG_INFINITY;
        }
    }
    Ok(out)
}
