//! Grid search over loss weights and learning rate.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sncl_core::datasets::Dataset;

use crate::config::{ExperimentConfig, SweepGrid, DEFAULT_SWEEP_SEEDS};
use crate::data::{self, Source};
use crate::experiment::{aggregate, run_one, run_pool, AggregateRow, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCell {
    pub rank: usize,
    /// Position in the grid's enumeration order.
    pub cell: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lr: f64,
    pub seed_count: usize,
    pub failed: usize,
    pub avg_acc_mean: f64,
    pub avg_acc_std: f64,
    pub forgetting_mean: f64,
}

/// Cartesian product of the grid; axes not listed keep `base`'s value.
pub fn cells(base: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<Cell>> {
    let w = base.train.method.weights;
    let axes = [
        ("alpha", &grid.alpha, w.alpha),
        ("beta", &grid.beta, w.beta),
        ("gamma", &grid.gamma, w.gamma),
        ("eta", &grid.eta, w.eta),
        ("lr", &grid.lr, base.train.lr),
    ];
    if axes.iter().all(|(_, v, _)| v.is_none()) {
        bail!("sweep grid is empty: list at least one of alpha, beta, gamma, eta, lr under [sweep]");
    }
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (name, v, default) in axes {
        match v {
            Some(v) if v.is_empty() => bail!("sweep grid axis `{name}` is empty"),
            Some(v) => values.push(v.clone()),
            None => values.push(vec![default]),
        }
    }
    let mut out = Vec::new();
    for &alpha in &values[0] {
        for &beta in &values[1] {
            for &gamma in &values[2] {
                for &eta in &values[3] {
                    for &lr in &values[4] {
                        out.push(Cell { alpha, beta, gamma, eta, lr });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `base` with the cell's values and the validation seeds.
pub fn cell_config(base: &ExperimentConfig, cell: &Cell, seeds: &[u64]) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let w = &mut cfg.train.method.weights;
    w.alpha = cell.alpha;
    w.beta = cell.beta;
    w.gamma = cell.gamma;
    w.eta = cell.eta;
    cfg.train.lr = cell.lr;
    cfg.seeds = seeds.to_vec();
    cfg.sweep = None;
    cfg.validate().with_context(|| format!("sweep cell {cell:?}"))?;
    Ok(cfg)
}

/// Orders cells by mean validation accuracy, best first; ties and failed
/// cells (NaN mean) keep grid order at the end.
pub fn rank(rows: Vec<(Cell, AggregateRow, usize)>) -> Vec<RankedCell> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let key = |i: usize| {
        let m = rows[i].1.avg_acc_mean;
        if m.is_nan() {
            f64::NEG_INFINITY
        } else {
            m
        }
    };
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    idx.into_iter()
        .enumerate()
        .map(|(r, i)| {
            let (c, a, failed) = &rows[i];
            RankedCell {
                rank: r + 1,
                cell: i,
                alpha: c.alpha,
                beta: c.beta,
                gamma: c.gamma,
                eta: c.eta,
                lr: c.lr,
                seed_count: a.seed_count,
                failed: *failed,
                avg_acc_mean: a.avg_acc_mean,
                avg_acc_std: a.avg_acc_std,
                forgetting_mean: a.forgetting_mean,
            }
        })
        .collect()
}

pub fn sweep_on(base: &ExperimentConfig, data: &Dataset, source: Source) -> Result<Vec<RankedCell>> {
    let grid = base.sweep.clone().unwrap_or_default();
    let grid_cells = cells(base, &grid)?;
    let seeds = grid.seeds.clone().unwrap_or_else(|| DEFAULT_SWEEP_SEEDS.to_vec());
    if seeds.is_empty() {
        bail!("sweep seeds must not be empty");
    }
    let configs = grid_cells.iter().map(|c| cell_config(base, c, &seeds)).collect::<Result<Vec<_>>>()?;
    log::info!("sweep: {} cells x {} seeds", configs.len(), seeds.len());

    // one flat job list so small cells still fill the pool
    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let records: Vec<RunRecord> = run_pool(base.worker_count(jobs.len()), &jobs, |&(c, s)| run_one(&configs[c], data, source, s).record)?;

    let mut rows = Vec::with_capacity(configs.len());
    for (i, chunk) in records.chunks(seeds.len()).enumerate() {
        let failed = chunk.iter().filter(|r| r.metrics.is_none()).count();
        rows.push((grid_cells[i], aggregate(chunk)?, failed));
    }
    Ok(rank(rows))
}

pub fn write_sweep(path: &Path, ranked: &[RankedCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in ranked {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the grid and writes `sweep.csv` under `out`.
pub fn sweep(base: &ExperimentConfig, out: &Path) -> Result<Vec<RankedCell>> {
    let (data, source) = data::load_base(base.scale)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ranked = sweep_on(base, &data, source)?;
    write_sweep(&out.join("sweep.csv"), &ranked)?;
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FileConfig, Overrides};

    fn base(text: &str) -> ExperimentConfig {
        ExperimentConfig::resolve(FileConfig::parse(text).unwrap(), Overrides::default()).unwrap()
    }

    #[test]
    fn empty_grids_are_config_errors() {
        assert!(cells(&base(""), &SweepGrid::default()).is_err());
        let cfg = base("[sweep]\nalpha = []\n");
        assert!(cells(&cfg, cfg.sweep.as_ref().unwrap()).is_err());
    }

    #[test]
    fn grid_is_cartesian_with_defaults() {
        let cfg = base("[sweep]\nalpha = [0.1, 0.2]\nlr = [0.05, 0.1, 0.2]\n");
        let c = cells(&cfg, cfg.sweep.as_ref().unwrap()).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|c| c.beta == cfg.train.method.weights.beta));
    }

    #[test]
    fn invalid_cell_is_rejected() {
        let cfg = base("[sweep]\nalpha = [0.0]\n");
        let c = cells(&cfg, cfg.sweep.as_ref().unwrap()).unwrap();
        assert!(cell_config(&cfg, &c[0], &[1]).is_err());
    }

    #[test]
    fn ranking_is_a_permutation_with_best_first() {
        let row = |m: f64| AggregateRow {
            protocol: "p".into(),
            method: "m".into(),
            buffer: 1,
            seed_count: 1,
            avg_acc_mean: m,
            avg_acc_std: 0.0,
            forgetting_mean: 0.0,
        };
        let cell = Cell {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            eta: 0.0,
            lr: 0.1,
        };
        let means = [50.0, f64::NAN, 70.0, 50.0, 10.0];
        let ranked = rank(means.iter().map(|&m| (cell, row(m), 0)).collect());
        let mut order: Vec<usize> = ranked.iter().map(|r| r.cell).collect();
        assert_eq!(order, vec![2, 0, 3, 4, 1]);
        order.sort_unstable();
        assert_eq!(order, (0..5).collect::<Vec<_>>());
        assert!(ranked.iter().all(|r| ranked[0].avg_acc_mean >= r.avg_acc_mean || r.avg_acc_mean.is_nan()));
    }
}
