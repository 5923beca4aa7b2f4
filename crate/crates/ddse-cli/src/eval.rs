//! `eval`: error rate of a checkpoint on a dataset split. Stdout carries
//! exactly one line, the rate to four decimal places; context goes to
//! stderr so scripts can parse the number directly.

use crate::{data_source, util, EvalArgs};
use ddse::checkpoint::{load_checkpoint, CheckpointPayload};
use ddse::data::{load_idx, LabeledDataset};
use ddse::sparse_store::compress;
use ddse::trainer::evaluate;
use ddse::{Error, Result};
use std::io::Write as _;

fn load_split(args: &EvalArgs, classes: usize) -> Result<LabeledDataset> {
    if let (Some(images), Some(labels)) = (&args.images, &args.labels) {
        return load_idx(images, labels);
    }
    let source = data_source::resolve(&args.data)?;
    let (train, heldout) = data_source::load(&source, classes)?;
    match args.split.as_str() {
        "train" => Ok(train),
        "test" => Ok(heldout),
        other => Err(Error::config(format!(
            "--split must be train or test, got '{other}'"
        ))),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let payload = load_checkpoint(&args.checkpoint)?;
    let error = if args.sparse {
        let compiled = match payload {
            CheckpointPayload::Compressed(ce) => ce,
            CheckpointPayload::Dense { model, basis } => compress(&model, basis.as_ref())?,
        };
        let data = load_split(args, compiled.classes)?;
        eprintln!(
            "eval: {} arch={} split={} samples={} path=sparse",
            args.checkpoint.display(),
            compiled.arch.tag(),
            args.split,
            data.len(),
        );
        util::eval_compiled(&compiled, &data)?
    } else {
        let (model, basis) = match payload {
            CheckpointPayload::Dense { model, basis } => (model, basis),
            CheckpointPayload::Compressed(ce) => util::decompress(&ce)?,
        };
        let data = load_split(args, model.classes)?;
        eprintln!(
            "eval: {} arch={} split={} samples={} path=dense",
            args.checkpoint.display(),
            model.arch.tag(),
            args.split,
            data.len(),
        );
        evaluate(&model, basis.as_ref(), &data)?.0
    };

    println!("{error:.4}");

    if let Some(csv_path) = &args.csv {
        let fresh = !csv_path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv_path)
            .map_err(|e| Error::io(csv_path, e))?;
        if fresh {
            writeln!(file, "checkpoint,split,path,error").map_err(|e| Error::io(csv_path, e))?;
        }
        let mode = if args.sparse { "sparse" } else { "dense" };
        writeln!(
            file,
            "{},{},{mode},{error}",
            args.checkpoint.display(),
            args.split
        )
        .map_err(|e| Error::io(csv_path, e))?;
    }
    Ok(())
}
