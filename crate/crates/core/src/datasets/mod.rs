//! Labeled sets and continual-learning stream builders.
//!
//! Everything here is pure: given the same base data and seed, a builder
//! returns the same stream.

mod idx;
mod streams;
mod synth;
mod transform;

pub use idx::{encode_idx_images, encode_idx_labels, parse_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use streams::{build_mnist360, build_pmnist, build_rmnist, build_split, Mnist360Options, StreamSize};
pub use synth::{synth_blobs, synth_digits, DIGIT_SIDE};
pub use transform::{permute_pixels, random_permutation, rotate_image};

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nd::Tensor;

/// `N` inputs of width `D` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(Error::dim("labeled set", &[labels.len(), dim], &[inputs.len()]));
        }
        Ok(LabeledSet { dim, inputs, labels })
    }

    pub fn empty(dim: usize) -> Self {
        LabeledSet {
            dim,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn push(&mut self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::dim("labeled set push", &[self.dim], &[x.len()]));
        }
        self.inputs.extend_from_slice(x);
        self.labels.push(y);
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        let mut out = LabeledSet::empty(self.dim);
        out.inputs.reserve(indices.len() * self.dim);
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Rows `indices` as a `[n×D]` tensor plus their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let sub = self.subset(indices);
        let n = sub.len();
        Ok((Tensor::new(&[n, self.dim], sub.inputs)?, sub.labels))
    }

    /// Maps every input through `f`, keeping labels.
    pub fn map_inputs(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<LabeledSet> {
        let mut out = LabeledSet::empty(self.dim);
        for i in 0..self.len() {
            let x = f(i, self.input(i));
            out.push(&x, self.labels[i])?;
        }
        Ok(out)
    }

    /// Indices of every sample whose label is in `classes`.
    pub fn indices_of(&self, classes: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Train and test portions of a base dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: LabeledSet,
    pub test: LabeledSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    ClassIl,
    TaskIl,
    DomainIl,
    /// Boundary-free general continual learning.
    Gcl,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::ClassIl => "class_il",
            Setting::TaskIl => "task_il",
            Setting::DomainIl => "domain_il",
            Setting::Gcl => "gcl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "class_il" => Ok(Setting::ClassIl),
            "task_il" => Ok(Setting::TaskIl),
            "domain_il" => Ok(Setting::DomainIl),
            "gcl" => Ok(Setting::Gcl),
            other => Err(Error::config(alloc::format!("unknown setting `{other}`"))),
        }
    }
}

/// One training segment of a stream. Its train samples are already in the
/// (seeded) order the learner will see them.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub train: LabeledSet,
    /// Class set of the phase, recorded for task-aware evaluation.
    pub classes: Option<Vec<usize>>,
    /// Whether the end of this phase is a visible task boundary.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSplit {
    pub name: String,
    pub test: LabeledSet,
    pub classes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub phases: Vec<Phase>,
    /// For streams with boundaries, split `t` is the test set of phase `t`.
    pub eval: Vec<EvalSplit>,
    /// Width of the shared output head.
    pub classes: usize,
    pub setting: Setting,
}

impl TaskStream {
    pub fn boundary_free(&self) -> bool {
        self.phases.iter().all(|p| !p.boundary)
    }

    pub fn input_dim(&self) -> usize {
        self.phases.first().map_or(0, |p| p.train.dim())
    }

    pub fn train_len(&self) -> usize {
        self.phases.iter().map(|p| p.train.len()).sum()
    }
}
