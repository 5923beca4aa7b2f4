//! Dataset resolution: synthetic Gaussian blobs or MNIST-format IDX files
//! found under a directory given by flag or the DDSE_DATA_DIR variable.
//! Nothing is ever downloaded.

use crate::DataArgs;
use ddse::data::{load_idx, synth_gaussian, LabeledDataset};
use ddse::linalg::Matrix;
use ddse::rng::Rng;
use ddse::{Error, Result};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "DDSE_DATA_DIR";

/// Accepted basenames for the training pair, tried in order, each also
/// with a .gz suffix. The 12k names match the reduced corpus this repo
/// ships for tests.
const TRAIN_IMAGE_STEMS: [&str; 2] = ["train-images-idx3-ubyte", "train-images-12k-idx3-ubyte"];
const TRAIN_LABEL_STEMS: [&str; 2] = ["train-labels-idx1-ubyte", "train-labels-12k-idx1-ubyte"];

#[derive(Debug, Clone)]
pub enum Source {
    Synthetic {
        dim: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        holdout: usize,
    },
}

fn find_candidate(dir: &Path, stems: &[&str]) -> Option<PathBuf> {
    for stem in stems {
        for name in [stem.to_string(), format!("{stem}.gz")] {
            let path = dir.join(&name);
            if path.is_file() {
                return Some(path);
            }
        }
    }
    None
}

/// Decide where data comes from. MNIST requires a directory from
/// --data-dir or DDSE_DATA_DIR; the files themselves must already exist.
pub fn resolve(args: &DataArgs) -> Result<Source> {
    if args.synthetic {
        return Ok(Source::Synthetic {
            dim: args.synth_dim,
            per_class: args.synth_per_class,
            separation: args.synth_separation,
            seed: args.synth_seed,
        });
    }
    if !args.mnist {
        return Err(Error::config("no dataset selected: pass --synthetic or --mnist"));
    }
    let dir = match &args.data_dir {
        Some(dir) => dir.clone(),
        None => match std::env::var_os(DATA_DIR_ENV) {
            Some(v) => PathBuf::from(v),
            None => {
                return Err(Error::config(format!(
                    "--mnist needs a data directory: pass --data-dir or set {DATA_DIR_ENV}"
                )))
            }
        },
    };
    let images = find_candidate(&dir, &TRAIN_IMAGE_STEMS).ok_or_else(|| {
        Error::config(format!(
            "no training image file under {} (tried {} and the -12k variant, each optionally .gz)",
            dir.display(),
            TRAIN_IMAGE_STEMS[0],
        ))
    })?;
    let labels = find_candidate(&dir, &TRAIN_LABEL_STEMS).ok_or_else(|| {
        Error::config(format!(
            "no training label file under {} (tried {} and the -12k variant, each optionally .gz)",
            dir.display(),
            TRAIN_LABEL_STEMS[0],
        ))
    })?;
    Ok(Source::Mnist {
        images,
        labels,
        holdout: args.holdout,
    })
}

fn gather_columns(data: &LabeledDataset, range: std::ops::Range<usize>) -> LabeledDataset {
    let features = Matrix::from_fn(data.dim(), range.len(), |i, j| {
        data.features.at(i, range.start + j)
    });
    let labels = data.labels[range].to_vec();
    LabeledDataset::new(features, labels, data.class_count)
        .expect("column slice preserves dataset invariants")
}

/// Split off the last `holdout` samples as the evaluation set.
pub fn split_holdout(
    data: &LabeledDataset,
    holdout: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let total = data.len();
    if holdout == 0 || holdout >= total {
        return Err(Error::config(format!(
            "--holdout must lie in 1..{total} for a {total}-sample corpus, got {holdout}"
        )));
    }
    let pool = gather_columns(data, 0..total - holdout);
    let held = gather_columns(data, total - holdout..total);
    Ok((pool, held))
}

/// Load a source into a (train, held-out) pair. Synthetic data draws a
/// fifth of the training volume per class from an independent RNG stream,
/// so test samples never overlap training; --holdout applies to file
/// corpora only.
pub fn load(source: &Source, classes: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    match source {
        Source::Synthetic {
            dim,
            per_class,
            separation,
            seed,
        } => {
            let base = Rng::new(*seed);
            let mut train_rng = base.stream("synth-train");
            let train = synth_gaussian(classes, *dim, *per_class, *separation, &mut train_rng)?;
            let held_per_class = (per_class / 5).max(1);
            let mut test_rng = base.stream("synth-test");
            let test = synth_gaussian(classes, *dim, held_per_class, *separation, &mut test_rng)?;
            Ok((train, test))
        }
        Source::Mnist {
            images,
            labels,
            holdout,
        } => {
            let full = load_idx(images, labels)?;
            split_holdout(&full, *holdout)
        }
    }
}
