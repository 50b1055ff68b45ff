use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use super::loss::{loss_current, loss_fer_h, loss_fer_z, loss_memory_ce, total_loss, LossTerms};
use super::metrics::{forgetting, RunMetrics};
use super::optim::sgd_step_scaled;
use super::{Admission, Sampler, TrainConfig};
use crate::datasets::{EvalSplit, LabeledSet, Setting, TaskStream};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, masked_logits, GatedMlp, MlpConfig};
use crate::nd::{Graph, Tensor};
use crate::replay::{capture, MemoryItem, ReplayBuffer};
use crate::vbs::{self, GateMode};
use crate::{derive_seed, seed_streams, seeded_rng, Rng as SeededRng};

/// Loss values of one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub total: f64,
    pub current: f64,
    pub memory_ce: Option<f64>,
    pub fer_z: Option<f64>,
    pub fer_h: Option<f64>,
    pub vbs: Option<f64>,
    pub current_size: usize,
    pub replayed: usize,
}

/// Accuracy of `model` on each split. `TaskIl` restricts the argmax to the
/// split's class set; the other settings use the unmasked prediction.
pub fn evaluate(model: &GatedMlp, splits: &[EvalSplit], setting: Setting) -> Result<Vec<f64>> {
    splits
        .iter()
        .map(|split| {
            if split.test.is_empty() {
                return Err(Error::input(alloc::format!("split {} is empty", split.name)));
            }
            let all: Vec<usize> = (0..split.test.len()).collect();
            let (x, y) = split.test.batch(&all)?;
            let logits = model.infer(&x)?.logits;
            let pred = match setting {
                Setting::TaskIl => {
                    let classes = split
                        .classes
                        .as_ref()
                        .ok_or_else(|| Error::config(alloc::format!("split {} has no class set", split.name)))?;
                    argmax_rows(&masked_logits(&logits, classes)?)
                }
                Setting::ClassIl | Setting::DomainIl | Setting::Gcl => argmax_rows(&logits),
            };
            let correct = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
            Ok(correct as f64 / y.len() as f64)
        })
        .collect()
}

struct StepContext<'a> {
    cfg: &'a TrainConfig,
    step: u64,
    next_id: &'a mut u64,
}

/// One optimization step on a current batch, followed by the memory update.
fn train_step(
    model: &mut GatedMlp,
    buffer: Option<&mut ReplayBuffer>,
    ctx: StepContext<'_>,
    x_cur: &Tensor,
    y_cur: &[usize],
    rng: &mut SeededRng,
) -> Result<StepRecord> {
    let cfg = ctx.cfg;
    let w = cfg.method.weights;
    let n_cur = y_cur.len();

    let replay_idx = match buffer.as_deref() {
        Some(b) if cfg.method.uses_buffer() => b.sample_replay_batch(cfg.replay_batch(), rng),
        _ => None,
    };
    let replay: Vec<&MemoryItem> = match (&replay_idx, buffer.as_deref()) {
        (Some(idx), Some(b)) => idx.iter().map(|&i| &b.items()[i]).collect(),
        _ => Vec::new(),
    };
    let n_rep = replay.len();

    // One Sample-mode forward over [current; replay] so the whole mini-batch
    // shares a single gate noise draw.
    let mut rows: Vec<&[f64]> = (0..n_cur).map(|i| x_cur.row(i)).collect();
    rows.extend(replay.iter().map(|it| it.x.as_slice()));
    let x_all = Tensor::from_rows(&rows)?;

    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let shape = x_all.shape().to_vec();
    let xn = g.constant(&shape, x_all.into_data())?;
    let trace = model.forward(&mut g, &bound, xn, GateMode::Sample, rng)?;

    let cur_logits = g.slice_rows(trace.logits, 0, n_cur)?;
    let (current, per_cur) = loss_current(&mut g, cur_logits, y_cur)?;

    let mut terms = LossTerms {
        current,
        memory_ce: None,
        fer_z: None,
        fer_h: None,
        vbs: None,
    };
    let mut per_rep = Vec::new();
    if n_rep > 0 {
        let rep_logits = g.slice_rows(trace.logits, n_cur, n_rep)?;
        let y_rep: Vec<usize> = replay.iter().map(|it| it.y).collect();
        let (mce, per) = loss_memory_ce(&mut g, rep_logits, &y_rep)?;
        terms.memory_ce = Some(mce);
        per_rep = per;
        if w.beta > 0.0 {
            let z_hats: Vec<&[f64]> = replay.iter().map(|it| it.z_hat.as_slice()).collect();
            terms.fer_z = Some(loss_fer_z(&mut g, rep_logits, &z_hats)?);
        }
        if w.gamma > 0.0 {
            let feats = trace
                .features
                .iter()
                .map(|&f| g.slice_rows(f, n_cur, n_rep))
                .collect::<Result<Vec<_>>>()?;
            let h_hats: Vec<&[Vec<f64>]> = replay.iter().map(|it| it.h_hat.as_slice()).collect();
            terms.fer_h = Some(loss_fer_h(&mut g, &feats, &h_hats)?);
        }
    }
    if w.eta > 0.0 && model.config().gated {
        terms.vbs = Some(vbs::vbs_loss(&mut g, bound.gates())?);
    }
    let total = total_loss(&mut g, terms, &w)?;
    if !g.scalar(total).is_finite() {
        return Err(Error::NonFinite(alloc::format!("loss at step {}", ctx.step)));
    }
    let grads = g.backward(total)?;
    model.zero_grad();
    model.accumulate_grads(&bound, &grads)?;
    let scales: Vec<f64> = model
        .named_params()
        .iter()
        .map(|(name, _)| if name.starts_with("log_lambda") { cfg.gate_lr_scale } else { 1.0 })
        .collect();
    sgd_step_scaled(&mut model.params_mut(), cfg.lr, &scales)?;
    for gate in model.gates_mut() {
        gate.clip_log_lambda(cfg.log_lambda_max);
    }

    let value = |id: Option<_>| id.map(|n| g.scalar(n));
    let record = StepRecord {
        step: ctx.step,
        total: g.scalar(total),
        current: g.scalar(current),
        memory_ce: value(terms.memory_ce),
        fer_z: value(terms.fer_z),
        fer_h: value(terms.fer_h),
        vbs: value(terms.vbs),
        current_size: n_cur,
        replayed: n_rep,
    };
    let replayed_ids: Vec<u64> = replay.iter().map(|it| it.id).collect();
    drop(replay);

    if let (Some(buf), true) = (buffer, cfg.method.uses_buffer()) {
        let offered: Vec<usize> = if cfg.store_fraction < 1.0 {
            let k = ((cfg.store_fraction * n_cur as f64) as usize).clamp(1, n_cur);
            let mut picked = index::sample(rng, n_cur, k).into_vec();
            picked.sort_unstable();
            picked
        } else {
            (0..n_cur).collect()
        };
        let rows: Vec<&[f64]> = offered.iter().map(|&i| x_cur.row(i)).collect();
        let ys: Vec<usize> = offered.iter().map(|&i| y_cur[i]).collect();
        let losses: Vec<f64> = offered.iter().map(|&i| per_cur[i]).collect();
        let items = capture(model, &Tensor::from_rows(&rows)?, &ys, &losses, ctx.step, ctx.next_id)?;
        match cfg.method.sampler {
            Sampler::Reservoir => items.into_iter().for_each(|it| buf.reservoir_update(it, rng)),
            Sampler::LossAware => match cfg.admission {
                Admission::Batch => buf.lrs_update(items)?,
                Admission::Reservoir => buf.lrs_update_admitted(items, rng)?,
            },
        }
        if cfg.refresh_losses && !replayed_ids.is_empty() {
            buf.refresh_loss(&replayed_ids, &per_rep)?;
        }
    }
    Ok(record)
}

fn checkpoint(model: &GatedMlp, stream: &TaskStream, cfg: &TrainConfig, step: u64, m: &mut RunMetrics) -> Result<()> {
    m.accuracy.push(evaluate(model, &stream.eval, stream.setting)?);
    m.checkpoint_steps.push(step);
    m.sparsity.push(if model.config().gated {
        vbs::sparsity_report(model.gates(), cfg.prune_threshold)?
    } else {
        Vec::new()
    });
    Ok(())
}

fn phase_order(train: &LabeledSet, epoch: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    if epoch > 0 {
        order.shuffle(rng);
    }
    order
}

/// Trains `model` over the stream and evaluates every split at each phase end
/// (or every `eval_interval` batches when the stream has no boundaries).
pub fn train_stream(
    model: &mut GatedMlp,
    stream: &TaskStream,
    cfg: &TrainConfig,
    buffer: Option<&mut ReplayBuffer>,
    seed: u64,
) -> Result<RunMetrics> {
    train_stream_observed(model, stream, cfg, buffer, seed, &mut |_| {})
}

/// [`train_stream`] with a callback receiving every [`StepRecord`].
pub fn train_stream_observed(
    model: &mut GatedMlp,
    stream: &TaskStream,
    cfg: &TrainConfig,
    mut buffer: Option<&mut ReplayBuffer>,
    seed: u64,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<RunMetrics> {
    cfg.validate()?;
    if stream.phases.is_empty() || stream.train_len() == 0 {
        return Err(Error::config("training stream is empty"));
    }
    if stream.eval.is_empty() {
        return Err(Error::config("training stream has no evaluation split"));
    }
    if cfg.method.uses_buffer() && buffer.is_none() {
        return Err(Error::config("replay method given no buffer"));
    }
    let mut rng = seeded_rng(seed);
    let boundary_free = stream.boundary_free();
    let mut metrics = RunMetrics {
        setting: stream.setting,
        splits: stream.eval.iter().map(|s| s.name.clone()).collect(),
        accuracy: Vec::new(),
        checkpoint_steps: Vec::new(),
        average_accuracy: 0.0,
        forgetting: Vec::new(),
        sparsity: Vec::new(),
        steps: 0,
        stale_refreshes: 0,
    };
    let mut step = 0u64;
    let mut next_id = 0u64;
    let per_batch = cfg.current_batch();

    for phase in &stream.phases {
        for epoch in 0..cfg.epochs {
            let order = phase_order(&phase.train, epoch, &mut rng);
            for chunk in order.chunks(per_batch) {
                let (x, y) = phase.train.batch(chunk)?;
                step += 1;
                let ctx = StepContext {
                    cfg,
                    step,
                    next_id: &mut next_id,
                };
                let record = train_step(model, buffer.as_deref_mut(), ctx, &x, &y, &mut rng)?;
                observer(&record);
                if boundary_free && step.is_multiple_of(cfg.eval_interval as u64) {
                    checkpoint(model, stream, cfg, step, &mut metrics)?;
                }
            }
        }
        if !boundary_free {
            checkpoint(model, stream, cfg, step, &mut metrics)?;
        }
    }
    if boundary_free && metrics.checkpoint_steps.last() != Some(&step) {
        checkpoint(model, stream, cfg, step, &mut metrics)?;
    }

    let last = metrics.final_accuracy();
    metrics.average_accuracy = last.iter().sum::<f64>() / last.len() as f64;
    metrics.forgetting = forgetting(&metrics.accuracy, !boundary_free);
    metrics.steps = step;
    metrics.stale_refreshes = buffer.map_or(0, |b| b.stale_refreshes());
    Ok(metrics)
}

/// Builds a fresh model (and buffer, for replay methods) from `cfg` and trains it.
/// Initialization and training draw from separate sub-seeds of `seed`.
pub fn run_stream(stream: &TaskStream, cfg: &TrainConfig, seed: u64) -> Result<(RunMetrics, GatedMlp, Option<ReplayBuffer>)> {
    cfg.validate()?;
    let mut mlp = MlpConfig::new(stream.input_dim(), cfg.hidden, stream.classes);
    mlp.gated = cfg.method.gates;
    mlp.prune_threshold = cfg.prune_threshold;
    mlp.noise = cfg.noise;
    let mut init_rng = seeded_rng(derive_seed(seed, seed_streams::INIT));
    let mut model = GatedMlp::new(mlp, &mut init_rng)?;
    let mut buffer = if cfg.method.uses_buffer() {
        Some(ReplayBuffer::new(cfg.buffer_size)?)
    } else {
        None
    };
    let metrics = train_stream(&mut model, stream, cfg, buffer.as_mut(), derive_seed(seed, seed_streams::TRAIN))?;
    Ok((metrics, model, buffer))
}
