use alloc::format;

use crate::error::{Error, Result};
use crate::vbs::{NoiseScope, DEFAULT_LOG_LAMBDA_MAX, DEFAULT_PRUNE_THRESHOLD};

/// Weights of the replay and sparsity terms; the current-task CE always has
/// weight 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Memory cross-entropy.
    pub alpha: f64,
    /// Logit replay.
    pub beta: f64,
    /// Feature replay.
    pub gamma: f64,
    /// Sparsity regularizer.
    pub eta: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        eta: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("eta", self.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    fn uses_replay(&self) -> bool {
        self.alpha > 0.0 || self.beta > 0.0 || self.gamma > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Sgd,
    Er,
    Der,
    Sncl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sgd, Method::Er, Method::Der, Method::Sncl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Er => "er",
            Method::Der => "der",
            Method::Sncl => "sncl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Reservoir,
    LossAware,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Reservoir => "reservoir",
            Sampler::LossAware => "lrs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reservoir" => Ok(Sampler::Reservoir),
            "lrs" => Ok(Sampler::LossAware),
            other => Err(Error::config(format!("unknown sampler `{other}`"))),
        }
    }
}

/// Which incoming items the loss-aware sampler considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// The whole (possibly `store_fraction`-subsampled) batch.
    Batch,
    /// Only items passing the reservoir coin `M/n`.
    Reservoir,
}

impl Admission {
    pub fn name(self) -> &'static str {
        match self {
            Admission::Batch => "batch",
            Admission::Reservoir => "reservoir",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Admission::Batch),
            "reservoir" => Ok(Admission::Reservoir),
            other => Err(Error::config(format!("unknown admission `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub weights: LossWeights,
    pub sampler: Sampler,
    pub gates: bool,
}

impl MethodConfig {
    pub fn sgd() -> Self {
        MethodConfig {
            method: Method::Sgd,
            weights: LossWeights::ZERO,
            sampler: Sampler::Reservoir,
            gates: false,
        }
    }

    pub fn er() -> Self {
        MethodConfig {
            method: Method::Er,
            weights: LossWeights {
                alpha: 1.0,
                ..LossWeights::ZERO
            },
            sampler: Sampler::Reservoir,
            gates: false,
        }
    }

    /// Logit replay only, as in the original dark experience replay.
    pub fn der() -> Self {
        MethodConfig {
            method: Method::Der,
            weights: LossWeights {
                beta: 0.02,
                ..LossWeights::ZERO
            },
            sampler: Sampler::Reservoir,
            gates: false,
        }
    }

    pub fn sncl() -> Self {
        MethodConfig {
            method: Method::Sncl,
            weights: LossWeights {
                alpha: 0.3,
                beta: 0.03,
                gamma: 0.03,
                eta: 1e-4,
            },
            sampler: Sampler::LossAware,
            gates: true,
        }
    }

    pub fn preset(method: Method) -> Self {
        match method {
            Method::Sgd => Self::sgd(),
            Method::Er => Self::er(),
            Method::Der => Self::der(),
            Method::Sncl => Self::sncl(),
        }
    }

    pub fn uses_buffer(&self) -> bool {
        self.weights.uses_replay()
    }

    /// Checks the weight pattern each method is defined by.
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let w = &self.weights;
        let ok = match self.method {
            Method::Sgd => !w.uses_replay() && w.eta == 0.0 && !self.gates,
            Method::Er => w.alpha > 0.0 && w.beta == 0.0 && w.gamma == 0.0 && w.eta == 0.0 && self.sampler == Sampler::Reservoir,
            Method::Der => w.beta > 0.0,
            Method::Sncl => {
                w.alpha > 0.0 && w.beta > 0.0 && w.gamma > 0.0 && self.sampler == Sampler::LossAware && self.gates
            }
        };
        if !ok {
            return Err(Error::config(format!(
                "weights/sampler/gates {:?} do not describe method {}",
                self,
                self.method.name()
            )));
        }
        if w.eta > 0.0 && !self.gates {
            return Err(Error::config("eta > 0 requires gates"));
        }
        Ok(())
    }
}

/// Everything `train_stream` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: MethodConfig,
    pub lr: f64,
    /// Total batch: `⌈B/2⌉` current samples plus `⌊B/2⌋` replayed ones.
    pub batch_size: usize,
    pub buffer_size: usize,
    pub hidden: usize,
    pub epochs: usize,
    /// Overwrite stored losses with the latest replay CE.
    pub refresh_losses: bool,
    /// Fraction of each incoming batch offered to the memory.
    pub store_fraction: f64,
    /// Candidate set of the loss-aware sampler.
    pub admission: Admission,
    /// Evaluation period in batches for boundary-free streams.
    pub eval_interval: usize,
    /// Learning-rate multiplier for the gate `log_lambda` parameters.
    pub gate_lr_scale: f64,
    /// Upper clip applied to `log_lambda` after every step.
    pub log_lambda_max: f64,
    pub prune_threshold: f64,
    pub noise: NoiseScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: MethodConfig::sncl(),
            lr: 0.1,
            batch_size: 16,
            buffer_size: 200,
            hidden: 100,
            epochs: 1,
            refresh_losses: true,
            store_fraction: 1.0,
            admission: Admission::Reservoir,
            eval_interval: 100,
            gate_lr_scale: 100.0,
            log_lambda_max: DEFAULT_LOG_LAMBDA_MAX,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            noise: NoiseScope::PerSample,
        }
    }
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        TrainConfig {
            method: MethodConfig::preset(method),
            ..TrainConfig::default()
        }
    }

    pub fn current_batch(&self) -> usize {
        self.batch_size.div_ceil(2)
    }

    pub fn replay_batch(&self) -> usize {
        self.batch_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive and finite"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if self.method.uses_buffer() && self.buffer_size == 0 {
            return Err(Error::config("replay methods need buffer_size > 0"));
        }
        if self.hidden == 0 || self.epochs == 0 || self.eval_interval == 0 {
            return Err(Error::config("hidden, epochs and eval_interval must be positive"));
        }
        if !(self.store_fraction > 0.0 && self.store_fraction <= 1.0) {
            return Err(Error::config("store_fraction must lie in (0, 1]"));
        }
        if !(self.gate_lr_scale >= 0.0 && self.gate_lr_scale.is_finite()) {
            return Err(Error::config("gate_lr_scale must be finite and ≥ 0"));
        }
        if !self.log_lambda_max.is_finite() {
            return Err(Error::config("log_lambda_max must be finite"));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold.is_finite()) {
            return Err(Error::config("prune threshold must be positive and finite"));
        }
        Ok(())
    }
}
