//! Experiment configuration.
//!
//! A config file is TOML with a flat table of keys (all optional) plus an
//! optional `[sweep]` table:
//!
//! ```toml
//! protocol = "pmnist"      # pmnist | rmnist | smnist | smnist-til | mnist360
//! method = "sncl"          # sgd | er | der | sncl
//! scale = "reduced"        # reduced | full
//! seeds = [0, 1, 2, 3, 4]
//! buffer = 200
//! lr = 0.1
//! alpha = 0.3
//!
//! [sweep]
//! beta = [0.01, 0.03]
//! seeds = [100, 101, 102]
//! ```
//!
//! Values are resolved as method preset, then file, then command line.
//! Unknown keys are an error.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sncl_core::datasets::{Setting, StreamSize};
use sncl_core::trainer::{Admission, Method, MethodConfig, Sampler, TrainConfig};
use sncl_core::vbs::NoiseScope;

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [100, 101, 102];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Pmnist,
    Rmnist,
    /// Split digits, class-incremental.
    Smnist,
    /// Split digits with the task id given at test time.
    SmnistTil,
    Mnist360,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Pmnist,
        Protocol::Rmnist,
        Protocol::Smnist,
        Protocol::SmnistTil,
        Protocol::Mnist360,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pmnist => "pmnist",
            Protocol::Rmnist => "rmnist",
            Protocol::Smnist => "smnist",
            Protocol::SmnistTil => "smnist-til",
            Protocol::Mnist360 => "mnist360",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .with_context(|| format!("unknown protocol `{s}` (expected one of pmnist, rmnist, smnist, smnist-til, mnist360)"))
    }

    pub fn setting(self) -> Setting {
        match self {
            Protocol::Pmnist | Protocol::Rmnist => Setting::DomainIl,
            Protocol::Smnist => Setting::ClassIl,
            Protocol::SmnistTil => Setting::TaskIl,
            Protocol::Mnist360 => Setting::Gcl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Reduced,
    Full,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(Scale::Reduced),
            "full" => Ok(Scale::Full),
            other => bail!("unknown scale `{other}` (expected reduced or full)"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Reduced => "reduced",
            Scale::Full => "full",
        }
    }
}

/// Stream sizes. `None` means "all available".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub tasks: usize,
    pub train_per_task: Option<usize>,
    pub test_per_task: Option<usize>,
    pub per_pair: usize,
    pub test_per_digit: usize,
}

impl Sizes {
    pub fn for_scale(protocol: Protocol, scale: Scale) -> Sizes {
        let split = matches!(protocol, Protocol::Smnist | Protocol::SmnistTil);
        match scale {
            Scale::Reduced => Sizes {
                tasks: 5,
                train_per_task: Some(if split { 1000 } else { 2000 }),
                test_per_task: Some(if split { 200 } else { 1000 }),
                per_pair: 500,
                test_per_digit: 100,
            },
            Scale::Full => Sizes {
                tasks: if split { 5 } else { 20 },
                train_per_task: None,
                test_per_task: None,
                per_pair: 2000,
                test_per_digit: 1000,
            },
        }
    }

    pub fn stream_size(&self) -> StreamSize {
        StreamSize {
            tasks: self.tasks,
            train_per_task: self.train_per_task,
            test_per_task: self.test_per_task,
        }
    }
}

/// Grid of a `sweep`. Absent axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub lr: Option<Vec<f64>>,
    /// Validation seeds, kept apart from the evaluation seeds.
    pub seeds: Option<Vec<u64>>,
}

/// Raw file contents; everything optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub protocol: Option<String>,
    pub method: Option<String>,
    pub scale: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub buffer: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub sampler: Option<String>,
    pub gates: Option<bool>,
    pub admission: Option<String>,
    pub refresh_losses: Option<bool>,
    pub store_fraction: Option<f64>,
    pub eval_interval: Option<usize>,
    pub gate_lr_scale: Option<f64>,
    pub log_lambda_max: Option<f64>,
    pub prune_threshold: Option<f64>,
    pub noise: Option<String>,
    pub workers: Option<usize>,
    pub tasks: Option<usize>,
    pub train_per_task: Option<usize>,
    pub test_per_task: Option<usize>,
    pub per_pair: Option<usize>,
    pub test_per_digit: Option<usize>,
    pub checkpoint: Option<bool>,
    pub dump_buffer: Option<bool>,
    pub out: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command-line overrides; they win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub protocol: Option<String>,
    pub method: Option<String>,
    pub scale: Option<String>,
    pub seed: Option<u64>,
    pub buffer: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: bool,
    pub dump_buffer: bool,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub scale: Scale,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub sizes: Sizes,
    pub workers: usize,
    pub checkpoint: bool,
    pub dump_buffer: bool,
    pub out: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
}

fn parse_noise(s: &str) -> Result<NoiseScope> {
    match s {
        "sample" => Ok(NoiseScope::PerSample),
        "batch" => Ok(NoiseScope::PerBatch),
        other => bail!("unknown noise scope `{other}` (expected sample or batch)"),
    }
}

pub fn noise_name(n: NoiseScope) -> &'static str {
    match n {
        NoiseScope::PerSample => "sample",
        NoiseScope::PerBatch => "batch",
    }
}

impl ExperimentConfig {
    /// Defaults for `protocol`/`method` with nothing overridden.
    pub fn preset(protocol: Protocol, method: Method, scale: Scale) -> Self {
        ExperimentConfig {
            protocol,
            scale,
            seeds: DEFAULT_SEEDS.to_vec(),
            train: TrainConfig {
                method: MethodConfig::preset(method),
                ..TrainConfig::default()
            },
            sizes: Sizes::for_scale(protocol, scale),
            workers: 0,
            checkpoint: false,
            dump_buffer: false,
            out: None,
            sweep: None,
        }
    }

    pub fn resolve(file: FileConfig, cli: Overrides) -> Result<Self> {
        let pick = |c: &Option<String>, f: &Option<String>, d: &str| c.clone().or_else(|| f.clone()).unwrap_or_else(|| d.into());
        let protocol = Protocol::parse(&pick(&cli.protocol, &file.protocol, "pmnist"))?;
        let method = Method::parse(&pick(&cli.method, &file.method, "sncl"))?;
        let scale = Scale::parse(&pick(&cli.scale, &file.scale, "reduced"))?;
        let mut cfg = Self::preset(protocol, method, scale);

        if let Some(seeds) = file.seeds {
            cfg.seeds = seeds;
        }
        if let Some(s) = cli.seed {
            cfg.seeds = vec![s];
        }

        let t = &mut cfg.train;
        let w = &mut t.method.weights;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(w.alpha, file.alpha);
        set!(w.beta, file.beta);
        set!(w.gamma, file.gamma);
        set!(w.eta, file.eta);
        set!(t.method.gates, file.gates);
        if let Some(s) = &file.sampler {
            t.method.sampler = Sampler::parse(s)?;
        }
        if let Some(s) = &file.admission {
            t.admission = Admission::parse(s)?;
        }
        if let Some(s) = &file.noise {
            t.noise = parse_noise(s)?;
        }
        set!(t.buffer_size, file.buffer);
        set!(t.buffer_size, cli.buffer);
        set!(t.lr, file.lr);
        set!(t.batch_size, file.batch_size);
        set!(t.hidden, file.hidden);
        set!(t.epochs, file.epochs);
        set!(t.refresh_losses, file.refresh_losses);
        set!(t.store_fraction, file.store_fraction);
        set!(t.eval_interval, file.eval_interval);
        set!(t.gate_lr_scale, file.gate_lr_scale);
        set!(t.log_lambda_max, file.log_lambda_max);
        set!(t.prune_threshold, file.prune_threshold);

        let s = &mut cfg.sizes;
        set!(s.tasks, file.tasks);
        if file.train_per_task.is_some() {
            s.train_per_task = file.train_per_task;
        }
        if file.test_per_task.is_some() {
            s.test_per_task = file.test_per_task;
        }
        set!(s.per_pair, file.per_pair);
        set!(s.test_per_digit, file.test_per_digit);

        set!(cfg.workers, file.workers);
        set!(cfg.workers, cli.workers);
        cfg.checkpoint = cli.checkpoint || file.checkpoint.unwrap_or(false);
        cfg.dump_buffer = cli.dump_buffer || file.dump_buffer.unwrap_or(false);
        cfg.out = cli.out.or(file.out);
        cfg.sweep = file.sweep;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        ensure!(sorted.len() == self.seeds.len(), "seeds contain duplicates");
        ensure!(self.sizes.tasks > 0, "tasks must be > 0");
        if matches!(self.protocol, Protocol::Smnist | Protocol::SmnistTil) {
            ensure!(
                (1..=5).contains(&self.sizes.tasks),
                "split protocols have at most 5 two-digit tasks"
            );
        }
        if self.protocol == Protocol::Mnist360 {
            ensure!(self.sizes.per_pair >= 2, "per_pair must be ≥ 2");
            ensure!(self.sizes.test_per_digit > 0, "test_per_digit must be > 0");
        }
        for (k, v) in [("train_per_task", self.sizes.train_per_task), ("test_per_task", self.sizes.test_per_task)] {
            ensure!(v != Some(0), "{k} must be > 0");
        }
        self.train.validate()?;
        Ok(())
    }

    /// Pool size actually used for `n` jobs.
    pub fn worker_count(&self, jobs: usize) -> usize {
        let cap = if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        };
        cap.min(jobs).max(1)
    }
}

/// Everything that shapes a run's numbers, echoed into its metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub protocol: String,
    pub setting: String,
    pub method: String,
    pub scale: String,
    pub buffer: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub sampler: String,
    pub gates: bool,
    pub admission: String,
    pub refresh_losses: bool,
    pub store_fraction: f64,
    pub eval_interval: usize,
    pub gate_lr_scale: f64,
    pub log_lambda_max: f64,
    pub prune_threshold: f64,
    pub noise: String,
    pub sizes: Sizes,
}

impl From<&ExperimentConfig> for ConfigEcho {
    fn from(c: &ExperimentConfig) -> Self {
        let t = &c.train;
        let w = &t.method.weights;
        ConfigEcho {
            protocol: c.protocol.name().into(),
            setting: c.protocol.setting().name().into(),
            method: t.method.method.name().into(),
            scale: c.scale.name().into(),
            buffer: t.buffer_size,
            lr: t.lr,
            batch_size: t.batch_size,
            hidden: t.hidden,
            epochs: t.epochs,
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            eta: w.eta,
            sampler: t.method.sampler.name().into(),
            gates: t.method.gates,
            admission: t.admission.name().into(),
            refresh_losses: t.refresh_losses,
            store_fraction: t.store_fraction,
            eval_interval: t.eval_interval,
            gate_lr_scale: t.gate_lr_scale,
            log_lambda_max: t.log_lambda_max,
            prune_threshold: t.prune_threshold,
            noise: noise_name(t.noise).into(),
            sizes: c.sizes,
        }
    }
}
