mod common;

use common::{config, TINY};
use sncl::config::Scale;
use sncl::data::{self, Source};
use sncl::experiment::{aggregate, run_experiment_on, RunRecord, Status};
use sncl::report::load_records;

fn base() -> sncl_core::datasets::Dataset {
    data::synthetic(Scale::Reduced)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, if v.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 })
}

#[test]
fn aggregate_can_be_recomputed_from_metrics_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(TINY);
    cfg.seeds = vec![0, 1, 2];
    run_experiment_on(&cfg, &base(), Source::Synthetic, dir.path()).unwrap();

    let recs = load_records(dir.path()).unwrap();
    assert_eq!(recs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    let acc: Vec<f64> = recs.iter().map(|r| 100.0 * r.metrics.as_ref().unwrap().average_accuracy).collect();
    let fgt: Vec<f64> = recs
        .iter()
        .map(|r| {
            let f = &r.metrics.as_ref().unwrap().forgetting;
            100.0 * f.iter().sum::<f64>() / f.len() as f64
        })
        .collect();
    let (m, sd) = mean_sd(&acc);

    let mut rdr = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    let num = |i: usize| row[i].parse::<f64>().unwrap();
    assert_eq!(&row[3], "3");
    assert!((num(4) - m).abs() < 1e-9, "{} vs {m}", num(4));
    assert!((num(5) - sd).abs() < 1e-9, "{} vs {sd}", num(5));
    assert!((num(6) - mean_sd(&fgt).0).abs() < 1e-9);
}

#[test]
fn identical_runs_have_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(TINY);
    cfg.seeds = vec![4];
    let s = run_experiment_on(&cfg, &base(), Source::Synthetic, dir.path()).unwrap();
    assert_eq!(s.aggregate.avg_acc_std, 0.0);
    let r = s.outcomes[0].record.clone();
    let twin = RunRecord { seed: 5, ..r.clone() };
    let a = aggregate(&[r, twin]).unwrap();
    assert_eq!(a.avg_acc_std, 0.0);
    assert_eq!(a.seed_count, 2);
}

#[test]
fn every_protocol_reports_consistent_metrics() {
    let b = base();
    for (protocol, extra) in [
        ("pmnist", ""),
        ("rmnist", ""),
        ("smnist", "tasks = 3\ntrain_per_task = 100\ntest_per_task = 50\n"),
        ("smnist-til", "tasks = 3\ntrain_per_task = 100\ntest_per_task = 50\n"),
        ("mnist360", "per_pair = 40\ntest_per_digit = 20\n"),
    ] {
        for method in ["sgd", "er", "der", "sncl"] {
            let text = format!(
                "protocol = \"{protocol}\"\nmethod = \"{method}\"\nseeds = [1]\nbuffer = 20\nhidden = 16\n{}",
                if extra.is_empty() { "tasks = 2\ntrain_per_task = 100\ntest_per_task = 50\n" } else { extra }
            );
            let dir = tempfile::tempdir().unwrap();
            let s = run_experiment_on(&config(&text), &b, Source::Synthetic, dir.path()).unwrap();
            let rec = &s.outcomes[0].record;
            assert_eq!(rec.status, Status::Ok, "{protocol}/{method}: {:?}", rec.error);
            let m = rec.metrics.as_ref().unwrap();
            assert!(m.forgetting.iter().all(|&f| f >= 0.0), "{protocol}/{method}");
            let last = m.accuracy.last().unwrap();
            let mean = last.iter().sum::<f64>() / last.len() as f64;
            assert!((m.average_accuracy - mean).abs() < 1e-12, "{protocol}/{method}");
            assert_eq!(m.accuracy.len(), m.checkpoint_steps.len());
            assert!(m.checkpoint_steps.windows(2).all(|w| w[0] < w[1]));
            if method == "sncl" {
                assert_eq!(m.sparsity.len(), m.accuracy.len());
            }
        }
    }
}

#[test]
fn diverging_seeds_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(TINY);
    cfg.train.lr = 1e200;
    let s = run_experiment_on(&cfg, &base(), Source::Synthetic, dir.path()).unwrap();
    assert_eq!(s.failed(), 2);
    assert_eq!(s.aggregate.seed_count, 0);
    assert!(s.aggregate.avg_acc_mean.is_nan());
    let recs = load_records(dir.path()).unwrap();
    assert!(recs.iter().all(|r| r.status == Status::Failed && r.metrics.is_none() && r.error.is_some()));
    let timings = std::fs::read_to_string(dir.path().join("timings.csv")).unwrap();
    assert_eq!(timings.matches(",failed,").count(), 2);
    // the report still works on a directory of failures
    let text = sncl::report::summarize(&recs).unwrap();
    assert!(text.contains("FAILED"));
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(TINY);
    run_experiment_on(&cfg, &base(), Source::Synthetic, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics_0.json")).unwrap();
    let rec: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(rec.config, sncl::config::ConfigEcho::from(&cfg));
    assert_eq!(rec.to_json(), text);
}
