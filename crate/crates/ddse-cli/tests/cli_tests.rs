//! End-to-end tests of the ddse binary: every subcommand, the documented
//! exit codes, artifact layouts, and determinism guarantees.

use ddse::data::{save_idx, LabeledDataset};
use ddse::linalg::Matrix;
use std::path::Path;
use std::process::{Command, Output};

fn ddse_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddse"));
    cmd.env_remove("DDSE_DATA_DIR");
    cmd.env_remove("DDSE_GRADCHECK_CORRUPT");
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("spawn ddse binary");
    (
        status.code().expect("no signal"),
        String::from_utf8(stdout).expect("utf8 stdout"),
        String::from_utf8(stderr).expect("utf8 stderr"),
    )
}

/// Small synthetic training run; fast enough to repeat freely.
fn train_args(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = [
        "train",
        "--arch",
        "ddse",
        "--synthetic",
        "--synth-dim",
        "16",
        "--synth-per-class",
        "30",
        "--m",
        "24",
        "--s",
        "4",
        "--k",
        "1",
        "--epochs",
        "2",
        "--seed",
        "7",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.push(out.display().to_string());
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

#[test]
fn train_writes_artifacts_and_repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    let (code, stdout, stderr) = run(ddse_cmd().args(train_args(&out1, &[])));
    assert_eq!(code, 0, "train failed: {stderr}");
    assert!(stdout.contains("checkpoint:"), "stdout: {stdout}");
    for name in ["checkpoint.ckpt", "history.csv", "config.toml"] {
        assert!(out1.join(name).is_file(), "missing {name}");
    }
    let history = std::fs::read_to_string(out1.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_error,lr,nonzeros");
    assert_eq!(lines.len(), 3, "header plus one row per epoch: {history}");

    let (code2, _, _) = run(ddse_cmd().args(train_args(&out2, &[])));
    assert_eq!(code2, 0);
    let a = std::fs::read(out1.join("checkpoint.ckpt")).unwrap();
    let b = std::fs::read(out2.join("checkpoint.ckpt")).unwrap();
    assert_eq!(a, b, "same command must write byte-identical checkpoints");
}

#[test]
fn train_without_dataset_selection_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(ddse_cmd().args([
        "train",
        "--arch",
        "ddse",
        "--out",
        &dir.path().join("x").display().to_string(),
    ]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("--synthetic"), "stderr: {stderr}");
    assert!(stderr.contains("--mnist"), "stderr: {stderr}");
}

#[test]
fn mnist_without_a_data_directory_names_the_flag_and_env_var() {
    let (code, _, stderr) = run(ddse_cmd().args(["train", "--arch", "ddse", "--mnist"]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("--data-dir"), "stderr: {stderr}");
    assert!(stderr.contains("DDSE_DATA_DIR"), "stderr: {stderr}");
}

#[test]
fn unknown_architecture_is_a_usage_error() {
    let (code, _, stderr) = run(ddse_cmd().args(["train", "--arch", "resnet", "--synthetic"]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("resnet"), "stderr: {stderr}");
}

#[test]
fn eval_sparse_and_dense_paths_print_the_same_four_decimal_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, _, _) = run(ddse_cmd().args(train_args(&out, &[])));
    assert_eq!(code, 0);
    let ckpt = out.join("checkpoint.ckpt").display().to_string();

    let eval = |mode: &str| -> String {
        let (code, stdout, stderr) = run(ddse_cmd().args([
            "eval",
            "--checkpoint",
            &ckpt,
            "--synthetic",
            "--synth-dim",
            "16",
            "--synth-per-class",
            "30",
            mode,
        ]));
        assert_eq!(code, 0, "eval {mode} failed: {stderr}");
        stdout.trim().to_string()
    };
    let dense = eval("--dense");
    let sparse = eval("--sparse");
    assert_eq!(dense, sparse, "inference paths disagree");
    // Exactly one line holding a four-decimal rate in [0, 1].
    let value: f64 = dense.parse().expect("numeric error rate");
    assert!((0.0..=1.0).contains(&value));
    assert_eq!(dense.split('.').nth(1).map(str::len), Some(4));
}

#[test]
fn eval_on_a_truncated_checkpoint_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, _, _) = run(ddse_cmd().args(train_args(&out, &[])));
    assert_eq!(code, 0);
    let whole = std::fs::read(out.join("checkpoint.ckpt")).unwrap();
    let clipped = dir.path().join("clipped.ckpt");
    std::fs::write(&clipped, &whole[..whole.len() / 2]).unwrap();
    let (code, _, stderr) = run(ddse_cmd().args([
        "eval",
        "--checkpoint",
        &clipped.display().to_string(),
        "--synthetic",
    ]));
    assert_eq!(code, 3, "stderr: {stderr}");
}

#[test]
fn idx_pair_under_data_dir_env_var_trains_and_evals() {
    let dir = tempfile::tempdir().unwrap();
    // 3-class, 16-dimensional corpus in MNIST's file format, under the
    // standard basenames, exercising the whole IDX code path quickly.
    let t = 90;
    let features = Matrix::from_fn(16, t, |i, j| {
        let c = j % 3;
        if i % 3 == c {
            ((i + j) % 200) as f64 / 255.0
        } else {
            0.0
        }
    });
    let labels: Vec<usize> = (0..t).map(|j| j % 3).collect();
    let data = LabeledDataset::new(features, labels, 3).unwrap();
    save_idx(
        &data,
        4,
        4,
        &dir.path().join("train-images-idx3-ubyte"),
        &dir.path().join("train-labels-idx1-ubyte"),
    )
    .unwrap();

    let out = dir.path().join("run");
    let (code, _, stderr) = run(ddse_cmd()
        .env("DDSE_DATA_DIR", dir.path())
        .args([
            "train",
            "--arch",
            "fc_plain",
            "--mnist",
            "--holdout",
            "30",
            "--classes",
            "3",
            "--m",
            "24",
            "--s",
            "4",
            "--epochs",
            "1",
            "--out",
            &out.display().to_string(),
        ]));
    assert_eq!(code, 0, "stderr: {stderr}");

    let (code, stdout, stderr) = run(ddse_cmd()
        .env("DDSE_DATA_DIR", dir.path())
        .args([
            "eval",
            "--checkpoint",
            &out.join("checkpoint.ckpt").display().to_string(),
            "--mnist",
            "--holdout",
            "30",
            "--split",
            "train",
        ]));
    assert_eq!(code, 0, "stderr: {stderr}");
    let rate: f64 = stdout.trim().parse().expect("numeric error rate");
    assert!((0.0..=1.0).contains(&rate));
}

#[test]
fn eval_accepts_an_explicit_idx_pair() {
    let dir = tempfile::tempdir().unwrap();
    let features = Matrix::from_fn(16, 30, |i, j| ((i * 7 + j) % 256) as f64 / 255.0);
    let labels: Vec<usize> = (0..30).map(|j| j % 3).collect();
    let data = LabeledDataset::new(features, labels, 3).unwrap();
    let images = dir.path().join("probe-images.idx");
    let labels_path = dir.path().join("probe-labels.idx");
    save_idx(&data, 4, 4, &images, &labels_path).unwrap();

    let out = dir.path().join("run");
    let (code, _, _) = run(ddse_cmd().args(train_args(&out, &[])));
    assert_eq!(code, 0);
    // 16-dim model evaluating a 16-dim explicit pair; labels 0..2 fit the
    // model's 10 classes.
    let (code, stdout, stderr) = run(ddse_cmd().args([
        "eval",
        "--checkpoint",
        &out.join("checkpoint.ckpt").display().to_string(),
        "--images",
        &images.display().to_string(),
        "--labels",
        &labels_path.display().to_string(),
    ]));
    assert_eq!(code, 0, "stderr: {stderr}");
    let rate: f64 = stdout.trim().parse().expect("numeric error rate");
    assert!((0.0..=1.0).contains(&rate));
}

fn write_lines(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn solve_identity_dictionary_soft_shrinks_and_artifacts_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("dict.csv");
    let input = dir.path().join("x.csv");
    write_lines(&dict, "1,0,0\n0,1,0\n0,0,1\n");
    write_lines(&input, "0.9\n-0.3\n0.05\n");
    let out = dir.path().join("solve");
    let (code, stdout, stderr) = run(ddse_cmd().args([
        "solve",
        "--dict",
        &dict.display().to_string(),
        "--input",
        &input.display().to_string(),
        "--lambda",
        "0.1",
        "--out",
        &out.display().to_string(),
    ]));
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("converged=true"), "stdout: {stdout}");

    let code_vals: Vec<f64> = std::fs::read_to_string(out.join("code.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    // Identity dictionary: one ISTA step is exact soft shrinkage of x.
    let expect = [0.8, -0.2, 0.0];
    for (got, want) in code_vals.iter().zip(expect) {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    // Recompute the final objective from the artifacts alone.
    let dict_rows: Vec<Vec<f64>> = std::fs::read_to_string(out.join("dict_normalized.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let x = [0.9, -0.3, 0.05];
    let mut residual = 0.0;
    for (i, row) in dict_rows.iter().enumerate() {
        let dz: f64 = row.iter().zip(&code_vals).map(|(d, z)| d * z).sum();
        residual += (x[i] - dz) * (x[i] - dz);
    }
    let l1: f64 = code_vals.iter().map(|v| v.abs()).sum();
    let recomputed = 0.5 * residual + 0.1 * l1;
    let last_objective: f64 = std::fs::read_to_string(out.join("objectives.csv"))
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (recomputed - last_objective).abs() <= 1e-10,
        "{recomputed} vs {last_objective}"
    );
}

#[test]
fn solve_with_huge_lambda_returns_zero_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("dict.csv");
    let input = dir.path().join("x.csv");
    write_lines(&dict, "0.6,0.2\n0.1,0.7\n");
    write_lines(&input, "1.0, -2.0\n");
    let out = dir.path().join("solve");
    let (code, stdout, _) = run(ddse_cmd().args([
        "solve",
        "--dict",
        &dict.display().to_string(),
        "--input",
        &input.display().to_string(),
        "--lambda",
        "1000",
        "--out",
        &out.display().to_string(),
    ]));
    assert_eq!(code, 0);
    assert!(
        stdout.contains("converged=true iterations=1 "),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("nnz=0"), "stdout: {stdout}");
    // Soft shrinkage keeps the sign bit, so a line may read -0.
    let code_text = std::fs::read_to_string(out.join("code.csv")).unwrap();
    assert!(
        code_text.lines().all(|l| l.parse::<f64>().unwrap() == 0.0),
        "code: {code_text}"
    );
}

#[test]
fn solve_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("dict.csv");
    let input = dir.path().join("x.csv");
    write_lines(&dict, "1,0\n0,1\n");
    write_lines(&input, "1\n2\n3\n");
    let (code, _, stderr) = run(ddse_cmd().args([
        "solve",
        "--dict",
        &dict.display().to_string(),
        "--input",
        &input.display().to_string(),
        "--lambda",
        "0.1",
        "--out",
        &dir.path().join("o").display().to_string(),
    ]));
    assert_eq!(code, 1, "stderr: {stderr}");
    assert!(stderr.contains('3') && stderr.contains('2'), "stderr: {stderr}");
}

#[test]
fn gradcheck_passes_per_tensor_and_the_corrupt_hook_fails_it() {
    let (code, stdout, stderr) =
        run(ddse_cmd().args(["gradcheck", "--arch", "no_shortcut", "--k", "2"]));
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("gradcheck PASS"), "stdout: {stdout}");
    assert!(stdout.contains("w2[1]"), "per-tensor rows: {stdout}");
    assert!(stdout.contains("max_rel"), "stdout: {stdout}");

    let (code, stdout, _) = run(ddse_cmd()
        .env("DDSE_GRADCHECK_CORRUPT", "1")
        .args(["gradcheck", "--arch", "no_shortcut", "--k", "2"]));
    assert_eq!(code, 1, "corrupted backward must fail the check");
    assert!(stdout.contains("FAIL"), "stdout: {stdout}");
}

#[test]
fn gradcheck_covers_every_architecture() {
    for arch in [
        "ddse",
        "lista",
        "fc_plain",
        "fc_dropout",
        "fc_dropconnect",
        "no_shortcut",
    ] {
        let (code, stdout, stderr) = run(ddse_cmd().args([
            "gradcheck", "--arch", arch, "--samples", "40", "--seed", "3",
        ]));
        assert_eq!(code, 0, "{arch} failed: {stderr}");
        assert!(stdout.contains("gradcheck PASS"), "{arch}: {stdout}");
    }
}

fn sweep_spec(values: &str, seeds: &str, out: &Path) -> String {
    format!(
        "archs = [\"ddse\"]\n\
         param = \"sample_fraction\"\n\
         values = {values}\n\
         seeds = {seeds}\n\
         output = \"{}\"\n\n\
         [train]\n\
         max_epochs = 1\n\
         batch_size = 32\n\
         init_scale_mode = \"spectral\"\n\
         m = 24\n\
         s = 4\n\
         k = 1\n",
        out.display()
    )
}

fn sweep_data_args() -> [&'static str; 4] {
    ["--synth-dim", "16", "--synth-per-class", "30"]
}

#[test]
fn sweep_writes_records_and_medians_with_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    let out = dir.path().join("grid");
    write_lines(&spec_path, &sweep_spec("[0.5, 1.0]", "[1, 2]", &out));
    let (code, stdout, stderr) = run(ddse_cmd()
        .args([
            "sweep",
            "--spec",
            &spec_path.display().to_string(),
            "--synthetic",
        ])
        .args(sweep_data_args()));
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("median ddse"), "stdout: {stdout}");

    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    let lines: Vec<&str> = records.lines().collect();
    assert_eq!(
        lines[0],
        "arch,param,value,seed,error,nonzeros,wall_time_s,spec_hash,history"
    );
    assert_eq!(lines.len(), 5, "4 runs: {records}");
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9);
        assert_eq!(cols[0], "ddse");
        assert_eq!(cols[1], "sample_fraction");
        let err: f64 = cols[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&err));
        assert!(out.join(cols[8]).is_file(), "history path {}", cols[8]);
    }
    let medians = std::fs::read_to_string(out.join("medians.csv")).unwrap();
    assert!(medians.starts_with("arch,param,value,median_error,seeds_used\n"));
    assert_eq!(medians.lines().count(), 3, "two cells: {medians}");
    assert!(!out.join("failures.csv").exists());
}

#[test]
fn sweep_rejects_duplicate_seeds_as_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    write_lines(
        &spec_path,
        &sweep_spec("[1.0]", "[3, 3]", &dir.path().join("grid")),
    );
    let (code, _, stderr) = run(ddse_cmd()
        .args([
            "sweep",
            "--spec",
            &spec_path.display().to_string(),
            "--synthetic",
        ])
        .args(sweep_data_args()));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("distinct"), "stderr: {stderr}");
}

#[test]
fn sweep_records_a_failed_cell_and_continues_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    let out = dir.path().join("grid");
    // feature_dim 0 fails per-run config validation; 24 still trains.
    let spec = sweep_spec("[24, 0]", "[1]", &out).replace("sample_fraction", "feature_dim");
    write_lines(&spec_path, &spec);
    let (code, _, stderr) = run(ddse_cmd()
        .args([
            "sweep",
            "--spec",
            &spec_path.display().to_string(),
            "--synthetic",
        ])
        .args(sweep_data_args()));
    assert_eq!(code, 1, "stderr: {stderr}");
    assert!(stderr.contains("1 of 2 runs failed"), "stderr: {stderr}");
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 2, "one surviving run: {records}");
    let failures = std::fs::read_to_string(out.join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 2, "one failure row: {failures}");
    assert!(failures.lines().nth(1).unwrap().starts_with("ddse,feature_dim,0,1,"));
}

#[test]
fn sweep_parallel_matches_sequential_records() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    let out_seq = dir.path().join("seq");
    let out_par = dir.path().join("par");
    write_lines(&spec_path, &sweep_spec("[0.5, 1.0]", "[1, 2]", &out_seq));
    let (code, _, _) = run(ddse_cmd()
        .args(["sweep", "--spec", &spec_path.display().to_string(), "--synthetic"])
        .args(sweep_data_args()));
    assert_eq!(code, 0);
    write_lines(&spec_path, &sweep_spec("[0.5, 1.0]", "[1, 2]", &out_par));
    let (code, _, _) = run(ddse_cmd()
        .args([
            "sweep",
            "--spec",
            &spec_path.display().to_string(),
            "--synthetic",
            "--parallel",
            "4",
        ])
        .args(sweep_data_args()));
    assert_eq!(code, 0);

    // Everything except wall time and the spec hash must match; the hash
    // legitimately differs because the two spec files name different
    // output directories.
    let strip = |path: &Path| -> Vec<String> {
        std::fs::read_to_string(path.join("records.csv"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols.remove(7);
                cols.remove(6);
                cols.join(",")
            })
            .collect()
    };
    assert_eq!(strip(&out_seq), strip(&out_par));
}

#[test]
fn spec_hash_is_stable_under_key_reordering() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let spec_a = format!(
        "archs = [\"ddse\"]\nparam = \"sample_fraction\"\nvalues = [1.0]\nseeds = [1]\n\
         output = \"{}\"\n[train]\nmax_epochs = 1\nbatch_size = 32\n\
         init_scale_mode = \"spectral\"\nm = 24\ns = 4\nk = 1\n",
        out_a.display()
    );
    // Same content, fields permuted at both levels. The output key differs,
    // and that difference must show up in the hash, so patch it afterwards.
    let spec_b = format!(
        "seeds = [1]\nvalues = [1.0]\nparam = \"sample_fraction\"\narchs = [\"ddse\"]\n\
         output = \"{}\"\n[train]\nk = 1\ns = 4\nm = 24\nbatch_size = 32\n\
         init_scale_mode = \"spectral\"\nmax_epochs = 1\n",
        out_a.display()
    );
    let path_a = dir.path().join("a.toml");
    let path_b = dir.path().join("b.toml");
    write_lines(&path_a, &spec_a);
    write_lines(&path_b, &spec_b);

    let hash_of = |spec_path: &Path, out: &Path| -> String {
        let (code, _, stderr) = run(ddse_cmd()
            .args(["sweep", "--spec", &spec_path.display().to_string(), "--synthetic"])
            .args(sweep_data_args()));
        assert_eq!(code, 0, "stderr: {stderr}");
        let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
        records
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(7)
            .unwrap()
            .to_string()
    };
    let h1 = hash_of(&path_a, &out_a);
    // Rerunning b overwrites a's output dir, which is fine for hashing.
    let h2 = hash_of(&path_b, &out_a);
    assert_eq!(h1, h2, "hash must ignore key order");
    assert_eq!(h1.len(), 64, "sha-256 hex");

    // A semantic change must change the hash.
    let spec_c = spec_a.replace("seeds = [1]", "seeds = [2]");
    write_lines(&path_b, &spec_c);
    let h3 = hash_of(&path_b, &out_a);
    assert_ne!(h1, h3, "different seeds, different hash");
    let _ = out_b;
}

#[test]
fn bench_reports_ratios_and_rejects_too_few_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, _, _) = run(ddse_cmd().args(train_args(&out, &[])));
    assert_eq!(code, 0);
    let ckpt = out.join("checkpoint.ckpt").display().to_string();

    let (code, stdout, stderr) = run(ddse_cmd().args([
        "bench",
        "--checkpoint",
        &ckpt,
        "--samples",
        "8",
        "--repeats",
        "3",
    ]));
    assert_eq!(code, 0, "stderr: {stderr}");
    // m=24, s=4, k=1, n=16: 3*4*24 = 288 sparse vs 24*16 + 24*24 = 960.
    assert!(
        stdout.contains("sparse=288 dense=960 ratio=0.300000"),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("measured us/sample"), "stdout: {stdout}");

    let (code, _, stderr) = run(ddse_cmd().args([
        "bench",
        "--checkpoint",
        &ckpt,
        "--repeats",
        "1",
    ]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("--repeats"), "stderr: {stderr}");
}

#[test]
fn config_file_merges_under_flags_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    write_lines(&config_path, "arch = \"fc_plain\"\nseed = 3\nm = 40\n");
    let out = dir.path().join("run");
    let (code, _, stderr) = run(ddse_cmd().args([
        "train",
        "--config",
        &config_path.display().to_string(),
        "--synthetic",
        "--synth-dim",
        "16",
        "--synth-per-class",
        "30",
        "--m",
        "48",
        "--epochs",
        "1",
        "--out",
        &out.display().to_string(),
    ]));
    assert_eq!(code, 0, "stderr: {stderr}");
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("arch = \"fc_plain\""), "{resolved}");
    assert!(resolved.contains("m = 48"), "flag beats file: {resolved}");
    assert!(resolved.contains("seed = 3"), "file beats default: {resolved}");
    // Synthetic profile fields survive when nothing overrides them.
    assert!(resolved.contains("batch_size = 32"), "{resolved}");

    write_lines(&config_path, "arch = \"fc_plain\"\nlerning_rate = 0.1\n");
    let (code, _, stderr) = run(ddse_cmd().args([
        "train",
        "--config",
        &config_path.display().to_string(),
        "--synthetic",
    ]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("lerning_rate"), "stderr: {stderr}");
}
