use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// How the right operand of a binary op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// One value per channel along the trailing (neuron) axis.
    Channel,
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Binary { kind: BinaryKind, a: NodeId, b: NodeId, bcast: Broadcast },
    AddScalar { a: NodeId },
    Scale { a: NodeId, c: f64 },
    Relu { a: NodeId },
    Exp { a: NodeId },
    Softplus { a: NodeId },
    Sum { a: NodeId },
    SliceRows { a: NodeId, start: usize },
    SoftmaxCe { logits: NodeId, labels: Vec<usize>, probs: Vec<f64> },
    SumSqDiff { a: NodeId, target: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Topologically ordered tape of operations. Every input id precedes the node
/// consuming it because nodes can only be created from existing ids.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if `id` was reached.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    /// Copies `t` into the graph. Gradients reach it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<NodeId> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(Op::Leaf, t.shape().to_vec(), t.into_data(), false))
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.node(id).value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.node(id).shape
    }

    /// Snapshot of a node's value as a plain tensor (no gradient linkage).
    pub fn tensor(&self, id: NodeId) -> Tensor {
        let n = self.node(id);
        Tensor::new(&n.shape, n.value.clone()).expect("graph nodes are well-formed")
    }

    /// Value of a 1-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.node(id).value[0]
    }

    fn matrix_dims(&self, id: NodeId) -> Option<(usize, usize)> {
        match self.node(id).shape.as_slice() {
            [m, n] => Some((*m, *n)),
            _ => None,
        }
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix_dims(a).ok_or_else(|| self.dim_err("matmul", a, b))?;
        let (k2, n) = self.matrix_dims(b).ok_or_else(|| self.dim_err("matmul", a, b))?;
        if k != k2 {
            return Err(self.dim_err("matmul", a, b));
        }
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(Op::MatMul { a, b }, vec![m, n], out, rg))
    }

    fn dim_err(&self, op: &'static str, a: NodeId, b: NodeId) -> Error {
        Error::dim(op, &self.node(a).shape, &self.node(b).shape)
    }

    fn broadcast_mode(&self, a: NodeId, b: NodeId) -> Option<Broadcast> {
        let sa = &self.node(a).shape;
        let sb = &self.node(b).shape;
        if sa == sb {
            Some(Broadcast::Same)
        } else if sb.iter().product::<usize>() == 1 {
            Some(Broadcast::Scalar)
        } else if sb.len() == 1 && sa.last() == sb.first() {
            Some(Broadcast::Channel)
        } else {
            None
        }
    }

    /// Pointwise `a ∘ b`. `b` may match `a`, hold one value per channel of
    /// `a`'s trailing axis, or be a single value.
    pub fn elementwise(&mut self, a: NodeId, b: NodeId, kind: BinaryKind) -> Result<NodeId> {
        let bcast = self
            .broadcast_mode(a, b)
            .ok_or_else(|| self.dim_err("elementwise", a, b))?;
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let c = bv.len();
        let out: Vec<f64> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bcast {
                    Broadcast::Same => bv[i],
                    Broadcast::Channel => bv[i % c],
                    Broadcast::Scalar => bv[0],
                };
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                }
            })
            .collect();
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        let shape = self.node(a).shape.clone();
        Ok(self.push(Op::Binary { kind, a, b, bcast }, shape, out, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, BinaryKind::Mul)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let n = self.node(a);
        let out = n.value.iter().map(|x| x + c).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(Op::AddScalar { a }, shape, out, rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let n = self.node(a);
        let out = n.value.iter().map(|x| x * c).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(Op::Scale { a, c }, shape, out, rg)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let n = self.node(a);
        let out = n.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(op, shape, out, rg)
    }

    /// `max(0, x)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu { a }, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp { a }, libm::exp)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus { a }, softplus)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let n = self.node(a);
        let s = n.value.iter().sum();
        let rg = n.requires_grad;
        self.push(Op::Sum { a }, vec![1], vec![s], rg)
    }

    /// Rows `start..start + len` of a 2-D node.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self
            .matrix_dims(a)
            .ok_or_else(|| Error::dim("slice_rows", &self.node(a).shape, &[start, len]))?;
        if len == 0 || start + len > m {
            return Err(Error::dim("slice_rows", &[m, n], &[start, len]));
        }
        let out = self.node(a).value[start * n..(start + len) * n].to_vec();
        let rg = self.node(a).requires_grad;
        Ok(self.push(Op::SliceRows { a, start }, vec![len, n], out, rg))
    }

    /// Mean softmax cross-entropy of `[B×K]` logits against integer labels.
    /// Returns the scalar loss node and the per-sample losses.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<(NodeId, Vec<f64>)> {
        let (b, k) = self
            .matrix_dims(logits)
            .ok_or_else(|| Error::dim("softmax_cross_entropy", &self.node(logits).shape, &[labels.len()]))?;
        if labels.len() != b {
            return Err(Error::dim("softmax_cross_entropy", &[b, k], &[labels.len()]));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::input(format!("label {bad} out of range for {k} classes")));
        }
        let z = &self.node(logits).value;
        let mut probs = vec![0.0; b * k];
        let mut per_sample = Vec::with_capacity(b);
        for (i, &y) in labels.iter().enumerate() {
            let row = &z[i * k..(i + 1) * k];
            let (arg, max) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, v)| if v > best.1 { (j, v) } else { best });
            // The arg-max term contributes exactly 1; log1p keeps tiny losses exact.
            let mut rest = 0.0;
            for (j, (p, &v)) in probs[i * k..(i + 1) * k].iter_mut().zip(row).enumerate() {
                *p = libm::exp(v - max);
                if j != arg {
                    rest += *p;
                }
            }
            let denom = 1.0 + rest;
            for p in &mut probs[i * k..(i + 1) * k] {
                *p /= denom;
            }
            per_sample.push(libm::log1p(rest) - (row[y] - max));
        }
        let mean = per_sample.iter().sum::<f64>() / b as f64;
        let rg = self.node(logits).requires_grad;
        let id = self.push(
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            vec![1],
            vec![mean],
            rg,
        );
        Ok((id, per_sample))
    }

    /// `Σ (aᵢ − tᵢ)²` against a constant target.
    pub fn sum_sq_diff(&mut self, a: NodeId, target: &Tensor) -> Result<NodeId> {
        let n = self.node(a);
        if n.shape != target.shape() {
            return Err(Error::dim("sum_sq_diff", &n.shape, target.shape()));
        }
        let s = n
            .value
            .iter()
            .zip(target.data())
            .map(|(x, t)| (x - t) * (x - t))
            .sum();
        let rg = n.requires_grad;
        Ok(self.push(
            Op::SumSqDiff {
                a,
                target: target.data().to_vec(),
            },
            vec![1],
            vec![s],
            rg,
        ))
    }

    /// Reverse pass from a scalar node. Nodes are visited in exact reverse
    /// creation order; gradients are only formed for nodes that require them.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("node {} is not in this graph", loss.0)));
        }
        if self.node(loss).value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.node(loss).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        // Only grads of nodes that participate in differentiation are meaningful.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let needs = |id: NodeId| self.node(id).requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.matrix_dims(*a).unwrap();
                let n = node.shape[1];
                let av = &self.node(*a).value;
                let bv = &self.node(*b).value;
                if needs(*a) {
                    // dA = dC · Bᵀ
                    let ga = slot(grads, *a, m * k);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if needs(*b) {
                    // dB = Aᵀ · dC
                    let gb = slot(grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (o, x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += aip * x;
                            }
                        }
                    }
                }
            }
            Op::Binary { kind, a, b, bcast } => {
                let av = &self.node(*a).value;
                let bv = &self.node(*b).value;
                let c = bv.len();
                let pick = |i: usize| match bcast {
                    Broadcast::Same => i,
                    Broadcast::Channel => i % c,
                    Broadcast::Scalar => 0,
                };
                if needs(*a) {
                    let ga = slot(grads, *a, av.len());
                    for (i, (o, gi)) in ga.iter_mut().zip(g).enumerate() {
                        *o += match kind {
                            BinaryKind::Add | BinaryKind::Sub => *gi,
                            BinaryKind::Mul => gi * bv[pick(i)],
                        };
                    }
                }
                if needs(*b) {
                    let gb = slot(grads, *b, c);
                    for (i, gi) in g.iter().enumerate() {
                        gb[pick(i)] += match kind {
                            BinaryKind::Add => *gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * av[i],
                        };
                    }
                }
            }
            Op::AddScalar { a } => {
                let ga = slot(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(o, x)| *o += x);
            }
            Op::Scale { a, c } => {
                let ga = slot(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(o, x)| *o += c * x);
            }
            Op::Relu { a } => {
                let av = &self.node(*a).value;
                let ga = slot(grads, *a, g.len());
                for ((o, x), gi) in ga.iter_mut().zip(av).zip(g) {
                    if *x > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::Exp { a } => {
                let ga = slot(grads, *a, g.len());
                for ((o, y), gi) in ga.iter_mut().zip(&node.value).zip(g) {
                    *o += gi * y;
                }
            }
            Op::Softplus { a } => {
                let av = &self.node(*a).value;
                let ga = slot(grads, *a, g.len());
                for ((o, x), gi) in ga.iter_mut().zip(av).zip(g) {
                    *o += gi * sigmoid(*x);
                }
            }
            Op::Sum { a } => {
                let n = self.node(*a).value.len();
                let ga = slot(grads, *a, n);
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::SliceRows { a, start } => {
                let n = node.shape[1];
                let total = self.node(*a).value.len();
                let ga = slot(grads, *a, total);
                for (o, x) in ga[start * n..start * n + g.len()].iter_mut().zip(g) {
                    *o += x;
                }
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let k = self.node(*logits).shape[1];
                let scale = g[0] / labels.len() as f64;
                let gl = slot(grads, *logits, probs.len());
                for (i, &y) in labels.iter().enumerate() {
                    for j in 0..k {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        gl[i * k + j] += scale * (probs[i * k + j] - onehot);
                    }
                }
            }
            Op::SumSqDiff { a, target } => {
                let av = &self.node(*a).value;
                let ga = slot(grads, *a, av.len());
                for ((o, x), t) in ga.iter_mut().zip(av).zip(target) {
                    *o += 2.0 * g[0] * (x - t);
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}
