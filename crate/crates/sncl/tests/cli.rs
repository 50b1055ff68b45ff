mod common;

use std::fs;

use common::{sncl, write, TINY};
use sncl::experiment::{BufferLine, RunRecord, CHECKPOINT_VERSION};

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let o = sncl(&["run", "--config", &cfg, "--out", "out", "--checkpoint", "--dump-buffer"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for f in [
        "metrics_0.json",
        "metrics_1.json",
        "checkpoint_0.json",
        "checkpoint_1.json",
        "buffer_0.jsonl",
        "buffer_1.jsonl",
        "aggregate.csv",
        "timings.csv",
        "accuracy.svg",
        "sparsity.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("protocol,method,buffer,seed_count,avg_acc_mean,avg_acc_std,forgetting_mean\npmnist,sncl,20,2,"));
    let timings = fs::read_to_string(out.join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 3);
    assert!(timings.lines().skip(1).all(|l| l.contains(",ok,")));

    let ck: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("checkpoint_0.json")).unwrap()).unwrap();
    assert_eq!(ck["version"], CHECKPOINT_VERSION);
    assert_eq!((ck["input_dim"].as_u64(), ck["hidden"].as_u64(), ck["classes"].as_u64()), (Some(784), Some(16), Some(10)));
    assert_eq!(ck["gated"], true);
    let params = ck["params"].as_array().unwrap();
    for p in params {
        let shape: Vec<u64> = p["shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert_eq!(shape.iter().product::<u64>() as usize, p["data"].as_array().unwrap().len(), "{}", p["name"]);
    }
    assert_eq!(params[0]["shape"], serde_json::json!([784, 16]));

    let dump = fs::read_to_string(out.join("buffer_0.jsonl")).unwrap();
    let lines: Vec<BufferLine> = dump.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().all(|l| l.y < 10 && l.stored_loss >= 0.0 && l.insert_step < 100));

    // plain runs write neither
    let o = sncl(&["run", "--config", &cfg, "--out", "plain", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = fs::read_dir(dir.path().join("plain"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.contains(&"metrics_3.json".to_string()));
    assert!(!names.iter().any(|n| n.starts_with("checkpoint") || n.starts_with("buffer") || n == "metrics_0.json"));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    for out in ["a", "b"] {
        let o = sncl(&["run", "--config", &cfg, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["metrics_0.json", "metrics_1.json", "aggregate.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn default_output_directory_names_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let o = sncl(&["run", "--config", &cfg, "--seed", "0", "--method", "er", "--buffer", "30"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("runs/pmnist_er_30/metrics_0.json")).unwrap();
    let rec: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!((rec.config.method.as_str(), rec.config.buffer), ("er", 30));
    assert_eq!(rec.data, "synthetic");
}

#[test]
fn config_errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("typo.toml", "lernig_rate = 0.1\n", "lernig_rate"),
        ("method.toml", "method = \"ewc\"\n", "ewc"),
        ("buffer.toml", "method = \"er\"\nbuffer = 0\n", "buffer"),
        ("seeds.toml", "seeds = [1, 1]\n", "duplicates"),
    ];
    for (name, text, needle) in cases {
        let cfg = write(dir.path(), name, text);
        let o = sncl(&["run", "--config", &cfg, "--out", "x"], dir.path());
        assert!(!o.status.success(), "{name} accepted");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = sncl(&["run", "--config", "does-not-exist.toml"], dir.path());
    assert!(!o.status.success());
    assert!(!dir.path().join("x").exists());
}

#[test]
fn report_summarizes_and_redraws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    assert!(sncl(&["run", "--config", &cfg, "--out", "out"], dir.path()).status.success());
    let out = dir.path().join("out");
    fs::remove_file(out.join("accuracy.svg")).unwrap();
    let o = sncl(&["report", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed 0") && text.contains("seed 1") && text.contains("forget"), "{text}");
    for f in ["accuracy.svg", "sparsity.svg"] {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline") || n.has_tag_name("path")), "{f} has no lines");
    }

    let o = sncl(&["report", "missing"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing"));
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = sncl(&["report", "empty"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no metrics"));
}

#[test]
fn single_cell_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY}\n[sweep]\nalpha = [0.3]\nseeds = [0, 1]\n");
    let cfg = write(dir.path(), "sweep.toml", &text);
    let o = sncl(&["sweep", "--config", &cfg, "--out", "sw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sncl(&["run", "--config", &cfg, "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut sw = csv::Reader::from_path(dir.path().join("sw/sweep.csv")).unwrap();
    let row: Vec<String> = sw.records().next().unwrap().unwrap().iter().map(String::from).collect();
    let head: Vec<String> = sw.headers().unwrap().iter().map(String::from).collect();
    let get = |k: &str| row[head.iter().position(|h| h == k).unwrap()].clone();
    let mut agg = csv::Reader::from_path(dir.path().join("run/aggregate.csv")).unwrap();
    let arow = agg.records().next().unwrap().unwrap();
    assert_eq!(get("rank"), "1");
    assert_eq!(get("seed_count"), "2");
    assert_eq!(get("avg_acc_mean"), &arow[4]);
    assert_eq!(get("avg_acc_std"), &arow[5]);
}
