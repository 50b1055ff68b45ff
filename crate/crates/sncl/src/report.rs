//! Text summary of a finished run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::experiment::{aggregate, RunRecord, Status};
use crate::plot;

/// Reads every `metrics_<seed>.json` in `dir`, ordered by seed.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read run directory {}", dir.display()))?;
    let mut records = Vec::new();
    for e in entries {
        let path = e?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !(name.starts_with("metrics_") && name.ends_with(".json")) {
            continue;
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let rec: RunRecord = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        records.push(rec);
    }
    if records.is_empty() {
        bail!("no metrics_<seed>.json files in {}", dir.display());
    }
    records.sort_by_key(|r| r.seed);
    Ok(records)
}

fn pct(v: f64) -> String {
    format!("{:6.2}", 100.0 * v)
}

/// Human-readable summary of `records`.
pub fn summarize(records: &[RunRecord]) -> Result<String> {
    let mut s = String::new();
    let agg = aggregate(records)?;
    let c = &records[0].config;
    writeln!(
        s,
        "{} ({}) / {} / buffer {} / data {}",
        c.protocol, c.setting, c.method, c.buffer, records[0].data
    )?;
    writeln!(
        s,
        "runs ok {} of {}: average accuracy {:.2} ± {:.2}, forgetting {:.2}",
        agg.seed_count,
        records.len(),
        agg.avg_acc_mean,
        agg.avg_acc_std,
        agg.forgetting_mean
    )?;
    for r in records {
        writeln!(s)?;
        let Some(m) = &r.metrics else {
            writeln!(s, "seed {}: FAILED: {}", r.seed, r.error.as_deref().unwrap_or("unknown error"))?;
            continue;
        };
        debug_assert_eq!(r.status, Status::Ok);
        writeln!(s, "seed {}: average accuracy {}", r.seed, pct(m.average_accuracy))?;
        write!(s, "  {:>8}", "step")?;
        for name in &m.splits {
            write!(s, " {name:>7}")?;
        }
        writeln!(s)?;
        for (k, row) in m.accuracy.iter().enumerate() {
            write!(s, "  {:>8}", m.checkpoint_steps.get(k).copied().unwrap_or(0))?;
            for v in row {
                write!(s, " {:>7}", pct(*v))?;
            }
            writeln!(s)?;
        }
        write!(s, "  {:>8}", "forget")?;
        for v in &m.forgetting {
            write!(s, " {:>7}", pct(*v))?;
        }
        writeln!(s)?;
        if let Some(last) = m.sparsity.last().filter(|l| !l.is_empty()) {
            let parts: Vec<String> = last
                .iter()
                .map(|l| format!("layer {}: {}/{} pruned, mean 1/λ {:.3}", l.layer + 1, l.pruned, l.active + l.pruned, l.mean_inverse_lambda))
                .collect();
            writeln!(s, "  sparsity: {} (overall {:.3})", parts.join("; "), m.final_pruned_fraction)?;
        }
    }
    Ok(s)
}

/// Summarizes `dir` and rewrites its SVG plots.
pub fn report(dir: &Path) -> Result<String> {
    let records = load_records(dir)?;
    plot::write_plots(dir, &records)?;
    summarize(&records)
}
