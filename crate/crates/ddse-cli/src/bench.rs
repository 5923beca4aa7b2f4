//! `bench`: theoretical and measured sparse/dense inference cost for a
//! checkpoint. The two paths must agree within 1e-10 before any timing is
//! reported; wall-clock numbers are informational, never asserted.

use crate::{util, BenchArgs};
use ddse::checkpoint::{load_checkpoint, CheckpointPayload};
use ddse::linalg::Matrix;
use ddse::rng::Rng;
use ddse::sparse_store::{bench_inference, compress};
use ddse::{Error, Result};

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.repeats < 3 {
        return Err(Error::config(format!(
            "--repeats must be at least 3 for a stable median, got {}",
            args.repeats
        )));
    }
    if args.samples == 0 {
        return Err(Error::config("--samples must be at least 1"));
    }
    let payload = load_checkpoint(&args.checkpoint)?;
    let (model, basis, compiled) = match payload {
        CheckpointPayload::Dense { model, basis } => {
            let compiled = compress(&model, basis.as_ref())?;
            (model, basis, compiled)
        }
        CheckpointPayload::Compressed(ce) => {
            let (model, basis) = util::decompress(&ce)?;
            (model, basis, ce)
        }
    };

    let mut rng = Rng::new(args.seed).stream("bench");
    let samples = Matrix::from_fn(model.n, args.samples, |_, _| rng.uniform());
    let report = bench_inference(&compiled, &model, basis.as_ref(), &samples, args.repeats)?;

    println!(
        "bench: arch={} n={} m={} k={} s={} samples={} repeats={}",
        model.arch.tag(),
        model.n,
        model.m,
        model.k,
        model.s,
        report.samples,
        report.repeats,
    );
    println!("stored weight nnz: {}", compiled.weight_nnz());
    println!(
        "theoretical ops/sample: sparse={} dense={} ratio={:.6}",
        report.sparse_ops, report.dense_ops, report.theoretical_ratio
    );
    println!(
        "measured us/sample: sparse={:.2} dense={:.2} ratio={:.4}",
        report.sparse_us_per_sample, report.dense_us_per_sample, report.measured_ratio
    );
    println!("max logit gap: {:.3e}", report.max_logit_gap);
    Ok(())
}
