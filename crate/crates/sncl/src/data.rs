//! Base digit data: MNIST IDX files when available, synthetic digits otherwise.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sncl_core::datasets::{parse_idx, synth_digits, Dataset};

use crate::config::Scale;

/// Directory holding the four uncompressed MNIST IDX files.
pub const DATA_DIR_ENV: &str = "SNCL_DATA_DIR";

pub const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

const SYNTH_TRAIN_SEED: u64 = 1;
const SYNTH_TEST_SEED: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Mnist,
    Synthetic,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Mnist => "mnist-idx",
            Source::Synthetic => "synthetic",
        }
    }
}

/// Loads MNIST from `dir`.
pub fn load_idx_dir(dir: &Path) -> Result<Dataset> {
    let read = |name: &str| -> Result<Vec<u8>> {
        let p = dir.join(name);
        std::fs::read(&p).with_context(|| format!("reading {}", p.display()))
    };
    let [tri, trl, tei, tel] = IDX_FILES.map(read);
    let train = parse_idx(&tri?, &trl?).context("parsing MNIST train files")?;
    let test = parse_idx(&tei?, &tel?).context("parsing MNIST test files")?;
    Ok(Dataset { train, test })
}

/// Procedural digits sized for `scale`.
pub fn synthetic(scale: Scale) -> Dataset {
    let (train, test) = match scale {
        Scale::Reduced => (300, 100),
        Scale::Full => (6000, 1000),
    };
    Dataset {
        train: synth_digits(train, SYNTH_TRAIN_SEED),
        test: synth_digits(test, SYNTH_TEST_SEED),
    }
}

/// MNIST if the env var is set (an error if its files are missing),
/// synthetic digits otherwise.
pub fn load_base(scale: Scale) -> Result<(Dataset, Source)> {
    load_base_from(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from), scale)
}

pub fn load_base_from(dir: Option<PathBuf>, scale: Scale) -> Result<(Dataset, Source)> {
    match dir {
        Some(dir) => {
            let ds = load_idx_dir(&dir).with_context(|| format!("{DATA_DIR_ENV}={} does not hold usable MNIST IDX files", dir.display()))?;
            log::info!("using MNIST from {}", dir.display());
            Ok((ds, Source::Mnist))
        }
        None => {
            log::info!("{DATA_DIR_ENV} not set, using synthetic digits");
            Ok((synthetic(scale), Source::Synthetic))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sncl_core::datasets::{encode_idx_images, encode_idx_labels};

    #[test]
    fn idx_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<u8> = (0..2 * 4).map(|i| (i * 30) as u8).collect();
        for (img, lab) in [(IDX_FILES[0], IDX_FILES[1]), (IDX_FILES[2], IDX_FILES[3])] {
            std::fs::write(dir.path().join(img), encode_idx_images(2, 2, &px)).unwrap();
            std::fs::write(dir.path().join(lab), encode_idx_labels(&[3, 7])).unwrap();
        }
        let (ds, src) = load_base_from(Some(dir.path().into()), Scale::Reduced).unwrap();
        assert_eq!(src, Source::Mnist);
        assert_eq!(ds.train.labels(), &[3, 7]);
        assert_eq!(ds.test.dim(), 4);
    }

    #[test]
    fn missing_files_name_the_env_var() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_base_from(Some(dir.path().into()), Scale::Reduced).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains(DATA_DIR_ENV) && msg.contains("train-images-idx3-ubyte"), "{msg}");
    }
}
