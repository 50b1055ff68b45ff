//! Seeded multi-run execution and the files it writes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sncl_core::datasets::{build_mnist360, build_pmnist, build_rmnist, build_split, Dataset, Mnist360Options, TaskStream};
use sncl_core::model::GatedMlp;
use sncl_core::replay::ReplayBuffer;
use sncl_core::trainer::{run_stream, RunMetrics};
use sncl_core::vbs::LayerSparsity;
use sncl_core::{derive_seed, seed_streams};

use crate::config::{ConfigEcho, ExperimentConfig, Protocol};
use crate::data::{self, Source};
use crate::plot;

pub const AGGREGATE_HEADER: [&str; 7] = [
    "protocol",
    "method",
    "buffer",
    "seed_count",
    "avg_acc_mean",
    "avg_acc_std",
    "forgetting_mean",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRecord {
    pub layer: usize,
    pub active: usize,
    pub pruned: usize,
    pub mean_inverse_lambda: f64,
}

impl From<&LayerSparsity> for SparsityRecord {
    fn from(s: &LayerSparsity) -> Self {
        SparsityRecord {
            layer: s.layer,
            active: s.active,
            pruned: s.pruned,
            mean_inverse_lambda: s.mean_inverse_lambda,
        }
    }
}

/// Serialized form of [`RunMetrics`]. Accuracies are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub setting: String,
    pub splits: Vec<String>,
    /// `accuracy[checkpoint][split]`
    pub accuracy: Vec<Vec<f64>>,
    pub checkpoint_steps: Vec<u64>,
    pub average_accuracy: f64,
    pub forgetting: Vec<f64>,
    pub mean_forgetting: f64,
    pub sparsity: Vec<Vec<SparsityRecord>>,
    /// Pruned fraction per checkpoint.
    pub pruned_fraction: Vec<f64>,
    pub final_pruned_fraction: f64,
    pub steps: u64,
    pub stale_refreshes: u64,
}

impl From<&RunMetrics> for MetricsRecord {
    fn from(m: &RunMetrics) -> Self {
        MetricsRecord {
            setting: m.setting.name().into(),
            splits: m.splits.clone(),
            accuracy: m.accuracy.clone(),
            checkpoint_steps: m.checkpoint_steps.clone(),
            average_accuracy: m.average_accuracy,
            forgetting: m.forgetting.clone(),
            mean_forgetting: m.mean_forgetting(),
            sparsity: m.sparsity.iter().map(|row| row.iter().map(SparsityRecord::from).collect()).collect(),
            pruned_fraction: m.sparsity.iter().map(|r| sncl_core::vbs::pruned_fraction(r)).collect(),
            final_pruned_fraction: m.final_pruned_fraction(),
            steps: m.steps,
            stale_refreshes: m.stale_refreshes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// Contents of `metrics_<seed>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub data: String,
    pub config: ConfigEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsRecord>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

pub struct SeedOutcome {
    pub record: RunRecord,
    pub seconds: f64,
    pub model: Option<GatedMlp>,
    pub buffer: Option<ReplayBuffer>,
}

/// One row of `aggregate.csv`. Accuracy and forgetting in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub protocol: String,
    pub method: String,
    pub buffer: usize,
    /// Successful runs only.
    pub seed_count: usize,
    pub avg_acc_mean: f64,
    pub avg_acc_std: f64,
    pub forgetting_mean: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation over the successful runs.
pub fn aggregate(records: &[RunRecord]) -> Result<AggregateRow> {
    let first = records.first().context("no runs to aggregate")?;
    let ok: Vec<&MetricsRecord> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let acc: Vec<f64> = ok.iter().map(|m| 100.0 * m.average_accuracy).collect();
    let fgt: Vec<f64> = ok.iter().map(|m| 100.0 * m.mean_forgetting).collect();
    let (avg_acc_mean, avg_acc_std) = mean_std(&acc);
    Ok(AggregateRow {
        protocol: first.config.protocol.clone(),
        method: first.config.method.clone(),
        buffer: first.config.buffer,
        seed_count: ok.len(),
        avg_acc_mean,
        avg_acc_std,
        forgetting_mean: mean_std(&fgt).0,
    })
}

/// Builds the stream of `protocol` for one seed.
pub fn build_stream(cfg: &ExperimentConfig, base: &Dataset, seed: u64) -> Result<TaskStream> {
    let s = &cfg.sizes;
    let data_seed = derive_seed(seed, seed_streams::DATA);
    let stream = match cfg.protocol {
        Protocol::Pmnist => build_pmnist(base, s.stream_size(), false, data_seed)?,
        Protocol::Rmnist => build_rmnist(base, s.stream_size(), data_seed)?,
        Protocol::Smnist | Protocol::SmnistTil => {
            let tasks: Vec<Vec<usize>> = (0..s.tasks).map(|t| vec![2 * t, 2 * t + 1]).collect();
            build_split(base, &tasks, s.train_per_task, s.test_per_task, cfg.protocol.setting(), data_seed)?
        }
        Protocol::Mnist360 => build_mnist360(
            base,
            Mnist360Options {
                per_pair: s.per_pair,
                test_per_digit: s.test_per_digit,
            },
            data_seed,
        )?,
    };
    Ok(stream)
}

/// Trains one seed. Training errors (e.g. a non-finite loss) become a failed
/// record instead of an `Err`.
pub fn run_one(cfg: &ExperimentConfig, base: &Dataset, source: Source, seed: u64) -> SeedOutcome {
    let start = Instant::now();
    let result = build_stream(cfg, base, seed).and_then(|stream| Ok(run_stream(&stream, &cfg.train, seed)?));
    let seconds = start.elapsed().as_secs_f64();
    let mut record = RunRecord {
        seed,
        status: Status::Ok,
        error: None,
        data: source.name().into(),
        config: ConfigEcho::from(cfg),
        metrics: None,
    };
    match result {
        Ok((metrics, model, buffer)) => {
            record.metrics = Some(MetricsRecord::from(&metrics));
            SeedOutcome {
                record,
                seconds,
                model: Some(model),
                buffer,
            }
        }
        Err(e) => {
            log::warn!("seed {seed} failed: {e:#}");
            record.status = Status::Failed;
            record.error = Some(format!("{e:#}"));
            SeedOutcome {
                record,
                seconds,
                model: None,
                buffer: None,
            }
        }
    }
}

/// Runs `jobs` on a pool of at most `workers` threads, keeping input order.
pub fn run_pool<T: Send, J: Sync>(workers: usize, jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

pub fn run_seeds(cfg: &ExperimentConfig, base: &Dataset, source: Source) -> Result<Vec<SeedOutcome>> {
    run_pool(cfg.worker_count(cfg.seeds.len()), &cfg.seeds, |&seed| run_one(cfg, base, source, seed))
}

pub struct ExperimentSummary {
    pub outcomes: Vec<SeedOutcome>,
    pub aggregate: AggregateRow,
}

impl ExperimentSummary {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.record.status == Status::Failed).count()
    }
}

/// Loads the base data, runs every seed and writes all outputs under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    let (base, source) = data::load_base(cfg.scale)?;
    run_experiment_on(cfg, &base, source, out)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, base: &Dataset, source: Source, out: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    log::info!(
        "{} / {} / M={} on {} seeds",
        cfg.protocol.name(),
        cfg.train.method.method.name(),
        cfg.train.buffer_size,
        cfg.seeds.len()
    );
    let outcomes = run_seeds(cfg, base, source)?;
    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let aggregate = aggregate(&records)?;
    write_outputs(out, &outcomes, &aggregate, cfg)?;
    Ok(ExperimentSummary { outcomes, aggregate })
}

pub fn metrics_file(seed: u64) -> String {
    format!("metrics_{seed}.json")
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    // header written by hand so it is present even with zero rows
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(out: &Path, outcomes: &[SeedOutcome], agg: &AggregateRow, cfg: &ExperimentConfig) -> Result<()> {
    for o in outcomes {
        let seed = o.record.seed;
        let path = out.join(metrics_file(seed));
        fs::write(&path, o.record.to_json()).with_context(|| format!("writing {}", path.display()))?;
        if cfg.checkpoint {
            if let Some(model) = &o.model {
                write_checkpoint(&out.join(format!("checkpoint_{seed}.json")), model)?;
            }
        }
        if cfg.dump_buffer {
            if let Some(buf) = &o.buffer {
                write_buffer_dump(&out.join(format!("buffer_{seed}.jsonl")), buf)?;
            }
        }
    }

    write_aggregate(&out.join("aggregate.csv"), std::slice::from_ref(agg))?;

    let path = out.join("timings.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["seed", "status", "wall_seconds"])?;
    for o in outcomes {
        let status = match o.record.status {
            Status::Ok => "ok",
            Status::Failed => "failed",
        };
        w.write_record([o.record.seed.to_string(), status.into(), format!("{:.3}", o.seconds)])?;
    }
    w.flush()?;

    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    plot::write_plots(out, &records)?;
    Ok(())
}

#[derive(Serialize)]
struct ParamDump<'a> {
    name: &'a str,
    shape: &'a [usize],
    data: &'a [f64],
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, model: &GatedMlp) -> Result<()> {
    let params: Vec<ParamDump> = model
        .named_params()
        .into_iter()
        .map(|(name, t)| ParamDump {
            name,
            shape: t.shape(),
            data: t.data(),
        })
        .collect();
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let c = model.config();
    let doc = serde_json::json!({
        "version": CHECKPOINT_VERSION,
        "input_dim": c.input_dim,
        "hidden": c.hidden,
        "classes": c.classes,
        "gated": c.gated,
        "params": params,
    });
    serde_json::to_writer(BufWriter::new(f), &doc)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct BufferLine {
    pub y: usize,
    pub stored_loss: f64,
    pub insert_step: u64,
}

pub fn write_buffer_dump(path: &Path, buf: &ReplayBuffer) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for it in buf.items() {
        let line = BufferLine {
            y: it.y,
            stored_loss: it.stored_loss,
            insert_step: it.insert_step,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_is_sample_std_and_zero_for_identical_runs() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
