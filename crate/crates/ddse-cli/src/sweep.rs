//! `sweep`: run an arch x value x seed grid from a spec file, writing one
//! run directory per cell plus records.csv, medians.csv, and failures.csv.
//! A failed run is recorded and the grid continues; the command then exits
//! nonzero. Runs are independent, so --parallel N>1 changes wall time only.

use crate::spec::{spec_hash, ExperimentSpec, RunRecord, RECORDS_HEADER};
use crate::{data_source, train, util, SweepArgs};
use ddse::checkpoint::{save_checkpoint, CheckpointPayload};
use ddse::data::{subsample, LabeledDataset};
use ddse::encoder::{count_parameters, Arch};
use ddse::pca::{pca_fit, PcaBasis};
use ddse::rng::Rng;
use ddse::trainer::{evaluate, pgd_train_with_basis};
use ddse::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

struct Plan {
    arch: Arch,
    value: f64,
    seed: u64,
    dir_name: String,
}

struct SweepContext<'a> {
    spec: &'a ExperimentSpec,
    hash: &'a str,
    pool: &'a LabeledDataset,
    heldout: &'a LabeledDataset,
    pool_basis: Option<&'a PcaBasis>,
    out_dir: &'a Path,
}

fn run_one(ctx: &SweepContext<'_>, plan: &Plan) -> Result<RunRecord> {
    let (config, fraction) = ctx.spec.config_for(plan.value, plan.seed, ctx.pool.dim())?;
    let train_set = if fraction < 1.0 {
        let mut rng = Rng::new(plan.seed).stream("subsample");
        subsample(ctx.pool, fraction, &mut rng)?
    } else {
        ctx.pool.clone()
    };
    let basis = if plan.arch.uses_pca() {
        ctx.pool_basis
    } else {
        None
    };

    let started = Instant::now();
    let state = pgd_train_with_basis(&train_set, ctx.heldout, &config, plan.arch, basis)?;
    let (error, _) = evaluate(&state.model, basis, ctx.heldout)?;
    let wall_time_s = started.elapsed().as_secs_f64();

    let run_dir = ctx.out_dir.join("runs").join(&plan.dir_name);
    util::ensure_dir(&run_dir)?;
    save_checkpoint(
        &run_dir.join("checkpoint.ckpt"),
        &CheckpointPayload::Dense {
            model: state.model.clone(),
            basis: basis.cloned(),
        },
    )?;
    util::write_file(&run_dir.join("history.csv"), &train::history_csv(&state))?;

    Ok(RunRecord {
        arch: plan.arch.tag().to_string(),
        param: ctx.spec.param.tag(),
        value: plan.value,
        seed: plan.seed,
        error,
        nonzeros: count_parameters(&state.model).0,
        wall_time_s,
        spec_hash: ctx.hash.to_string(),
        history: format!("runs/{}/history.csv", plan.dir_name),
    })
}

/// Work-queue execution preserving plan order in the results.
fn execute<'a>(
    ctx: &SweepContext<'a>,
    plans: &[Plan],
    threads: usize,
) -> Vec<Result<RunRecord>> {
    if threads <= 1 {
        return plans.iter().map(|p| run_one(ctx, p)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunRecord>>>> =
        Mutex::new((0..plans.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(plans.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= plans.len() {
                    break;
                }
                let result = run_one(ctx, &plans[i]);
                slots.lock().expect("sweep results lock")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep results lock")
        .into_iter()
        .map(|slot| slot.expect("every planned run executed"))
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.parallel == 0 {
        return Err(Error::config("--parallel must be at least 1"));
    }
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec = ExperimentSpec::parse(&text)?;
    let hash = spec_hash(&text)?;

    let base = spec.base_config()?;
    let source = data_source::resolve(&args.data)?;
    let (pool, heldout) = data_source::load(&source, base.classes)?;

    let out_dir = spec
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/sweep-{}", &hash[..8])));
    util::ensure_dir(&out_dir)?;

    // One basis fitted on the full pool, shared by every run that uses PCA,
    // so subsample fractions are compared in a fixed representation.
    let archs: Vec<Arch> = spec
        .archs
        .iter()
        .map(|name| Arch::parse(name))
        .collect::<Result<_>>()?;
    let pool_basis = if archs.iter().any(|a| a.uses_pca()) {
        Some(pca_fit(&pool.features)?)
    } else {
        None
    };

    let mut plans = Vec::new();
    for &arch in &archs {
        for &value in &spec.values {
            for &seed in &spec.seeds {
                plans.push(Plan {
                    arch,
                    value,
                    seed,
                    dir_name: format!("{}-{}-{value}-seed{seed}", arch.tag(), spec.param.tag()),
                });
            }
        }
    }
    println!(
        "sweep: {} runs ({} archs x {} values x {} seeds), spec {}, pool {} heldout {}",
        plans.len(),
        archs.len(),
        spec.values.len(),
        spec.seeds.len(),
        &hash[..8],
        pool.len(),
        heldout.len(),
    );

    let ctx = SweepContext {
        spec: &spec,
        hash: &hash,
        pool: &pool,
        heldout: &heldout,
        pool_basis: pool_basis.as_ref(),
        out_dir: &out_dir,
    };
    let results = execute(&ctx, &plans, args.parallel);

    let mut records_csv = String::from(RECORDS_HEADER);
    records_csv.push('\n');
    let mut failures_csv = String::from("arch,param,value,seed,message\n");
    let mut failed = 0usize;
    for (plan, result) in plans.iter().zip(&results) {
        match result {
            Ok(record) => {
                records_csv.push_str(&record.csv_row());
                records_csv.push('\n');
            }
            Err(err) => {
                failed += 1;
                let message = err.to_string().replace([',', '\n'], ";");
                writeln!(
                    failures_csv,
                    "{},{},{},{},{message}",
                    plan.arch.tag(),
                    spec.param.tag(),
                    plan.value,
                    plan.seed
                )
                .expect("string write");
            }
        }
    }
    util::write_file(&out_dir.join("records.csv"), &records_csv)?;
    if failed > 0 {
        util::write_file(&out_dir.join("failures.csv"), &failures_csv)?;
    }

    let mut medians_csv = String::from("arch,param,value,median_error,seeds_used\n");
    for &arch in &archs {
        for &value in &spec.values {
            let cell: Vec<f64> = plans
                .iter()
                .zip(&results)
                .filter_map(|(plan, result)| match result {
                    Ok(record)
                        if plan.arch == arch && plan.value == value =>
                    {
                        Some(record.error)
                    }
                    _ => None,
                })
                .collect();
            if cell.is_empty() {
                continue;
            }
            let med = median(cell.clone());
            writeln!(
                medians_csv,
                "{},{},{value},{med},{}",
                arch.tag(),
                spec.param.tag(),
                cell.len()
            )
            .expect("string write");
            println!(
                "median {} {}={value}: {med:.4} over {} seeds",
                arch.tag(),
                spec.param.tag(),
                cell.len()
            );
        }
    }
    util::write_file(&out_dir.join("medians.csv"), &medians_csv)?;
    println!("artifacts: {}", out_dir.display());

    if failed > 0 {
        return Err(Error::contract(
            "sweep",
            format!(
                "{failed} of {} runs failed; details in {}",
                plans.len(),
                out_dir.join("failures.csv").display()
            ),
        ));
    }
    Ok(())
}
