//! `train`: fit a model, then write checkpoint.ckpt, history.csv, and the
//! fully resolved config.toml into the run directory.

use crate::config::{render_resolved, resolve_train};
use crate::{data_source, util, TrainArgs};
use ddse::checkpoint::{save_checkpoint, CheckpointPayload};
use ddse::data::augment;
use ddse::pca::pca_fit;
use ddse::rng::Rng;
use ddse::trainer::{evaluate, pgd_train_with_basis, TrainState};
use ddse::Result;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

pub fn history_csv(state: &TrainState) -> String {
    let mut csv = String::from("epoch,train_loss,val_error,lr,nonzeros\n");
    for rec in &state.history {
        writeln!(
            csv,
            "{},{},{},{},{}",
            rec.epoch, rec.train_loss, rec.val_error, rec.lr, rec.nonzeros
        )
        .expect("string write");
    }
    csv
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let resolved = resolve_train(
        args.arch.as_deref(),
        args.config.as_deref(),
        args.data.synthetic,
        &args.overrides,
        &args.augment,
    )?;
    let source = data_source::resolve(&args.data)?;
    let (mut train_set, heldout) = data_source::load(&source, resolved.config.classes)?;
    if resolved.augment.enabled {
        let mut rng = Rng::new(resolved.config.seed).stream("augment");
        train_set = augment(&train_set, &resolved.augment, &mut rng)?;
    }

    let basis = if resolved.arch.uses_pca() {
        Some(pca_fit(&train_set.features)?)
    } else {
        None
    };

    println!(
        "train: arch={} n={} m={} k={} s={} train={} heldout={} seed={}",
        resolved.arch.tag(),
        train_set.dim(),
        resolved.config.m,
        resolved.config.k,
        resolved.config.s,
        train_set.len(),
        heldout.len(),
        resolved.config.seed,
    );

    let started = Instant::now();
    let state = pgd_train_with_basis(
        &train_set,
        &heldout,
        &resolved.config,
        resolved.arch,
        basis.as_ref(),
    )?;
    let elapsed = started.elapsed().as_secs_f64();

    let (test_error, _) = evaluate(&state.model, basis.as_ref(), &heldout)?;

    let out_dir = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "runs/train-{}-seed{}",
            resolved.arch.tag(),
            resolved.config.seed
        ))
    });
    util::ensure_dir(&out_dir)?;
    let ckpt_path = out_dir.join("checkpoint.ckpt");
    save_checkpoint(
        &ckpt_path,
        &CheckpointPayload::Dense {
            model: state.model.clone(),
            basis,
        },
    )?;
    util::write_file(&out_dir.join("history.csv"), &history_csv(&state))?;
    util::write_file(&out_dir.join("config.toml"), &render_resolved(&resolved)?)?;

    println!(
        "trained {} epochs in {elapsed:.1}s, best val_error {:.4}, heldout error {test_error:.4}",
        state.history.len(),
        state.best_val_error,
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
