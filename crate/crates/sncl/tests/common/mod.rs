#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use sncl::config::{ExperimentConfig, FileConfig, Overrides};

/// Two short P-MNIST tasks; a whole run takes well under a second.
pub const TINY: &str = r#"
protocol = "pmnist"
method = "sncl"
seeds = [0, 1]
buffer = 20
hidden = 16
tasks = 2
train_per_task = 160
test_per_task = 100
"#;

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::resolve(FileConfig::parse(text).unwrap(), Overrides::default()).unwrap()
}

pub fn sncl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sncl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SNCL_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}
