//! End-to-end tests of the command-line pipeline: artifact round trips,
//! exit codes, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_profile-irl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn gen_demos_n(dir: &Path, n: &str, extra: &[&str]) {
    let dir_s = dir.to_str().unwrap();
    let mut args = vec![
        "gen-demos",
        "--run-dir",
        dir_s,
        "--env",
        "figure1",
        "--n",
        n,
        "--gamma",
        "0.9",
        "--bins",
        "10",
        "--pairs",
        "10",
        "--fixed",
        "4",
        "--seed",
        "7",
    ];
    args.extend_from_slice(extra);
    assert_exit(&run(&args), 0);
}

fn gen_demos(dir: &Path, extra: &[&str]) {
    gen_demos_n(dir, "20", extra);
}

fn fit_fast(dir: &Path, extra: &[&str]) -> Output {
    let dir_s = dir.to_str().unwrap();
    let mut args = vec![
        "fit",
        "--run-dir",
        dir_s,
        "--n-epochs",
        "40",
        "--checkpoint-every",
        "20",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn gen_demos_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    for name in ["config.json", "demos.jsonl", "profile.json", "supervision.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let demos: Vec<serde_json::Value> = std::fs::read_to_string(dir.path().join("demos.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(demos.len(), 20);
    let profile: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile.json")).unwrap())
            .unwrap();
    let atoms = profile["atoms"].as_array().unwrap();
    assert!(!atoms.is_empty() && atoms.len() <= 10);
    let total: f64 = atoms.iter().map(|a| a[1].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let supervision: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("supervision.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(supervision["pairs"].as_array().unwrap().len(), 10);
    assert_eq!(supervision["fixed"].as_array().unwrap().len(), 4);
}

#[test]
fn gen_demos_rejects_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-demos", "--run-dir", dir.path().to_str().unwrap(), "--n", "0"]);
    assert_exit(&out, 1);
}

#[test]
fn gen_demos_no_profile_skips_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &["--no-profile"]);
    assert!(dir.path().join("demos.jsonl").exists());
    assert!(!dir.path().join("profile.json").exists());
    assert!(!dir.path().join("supervision.json").exists());
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-demos", "--run-dir", dir.path().to_str().unwrap(), "--env", "lunar"]);
    assert_exit(&out, 1);
}

#[test]
fn full_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    assert_exit(&fit_fast(dir.path(), &[]), 0);
    assert!(dir.path().join("model.json").exists());
    assert!(dir.path().join("checkpoints/ckpt_000020.json").exists());
    assert!(dir.path().join("checkpoints/ckpt_000040.json").exists());
    let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(log.starts_with("epoch,l_ot,l_pw,l_fix,l_tot,lr,lambda,grad_norm"));
    assert_eq!(log.lines().count(), 41);

    let out = run(&[
        "eval",
        "--run-dir",
        dir.path().to_str().unwrap(),
        "--correlate",
        "--reoptimize",
        "--heldout-n",
        "40",
        "--episodes",
        "20",
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report["pearson_returns"].is_number());
    assert!(report["gt_return_of_reoptimized_policy"].is_number());
    assert!(report["gt_return_of_best_demo"].is_number());
    assert_eq!(report["per_trajectory"].as_array().unwrap().len(), 40);
}

#[test]
fn repeated_fits_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    assert_exit(&fit_fast(dir.path(), &["--seed", "5"]), 0);
    let model_a = std::fs::read(dir.path().join("model.json")).unwrap();
    let log_a = std::fs::read(dir.path().join("log.csv")).unwrap();
    assert_exit(&fit_fast(dir.path(), &["--seed", "5"]), 0);
    let model_b = std::fs::read(dir.path().join("model.json")).unwrap();
    let log_b = std::fs::read(dir.path().join("log.csv")).unwrap();
    assert_eq!(model_a, model_b);
    assert_eq!(log_a, log_b);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    assert_exit(&fit_fast(dir.path(), &["--seed", "3"]), 0);
    let full = std::fs::read_to_string(dir.path().join("model.json")).unwrap();

    let out = run(&[
        "fit",
        "--run-dir",
        dir.path().to_str().unwrap(),
        "--n-epochs",
        "20",
        "--checkpoint-every",
        "20",
        "--seed",
        "3",
    ]);
    assert_exit(&out, 0);
    let out = run(&[
        "fit",
        "--run-dir",
        dir.path().to_str().unwrap(),
        "--n-epochs",
        "40",
        "--checkpoint-every",
        "20",
        "--seed",
        "3",
        "--resume-from",
        dir.path().join("checkpoints/ckpt_000020.json").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let resumed = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    let full_params = serde_json::from_str::<serde_json::Value>(&full).unwrap()["model"]["params"]
        .as_array()
        .unwrap()
        .clone();
    let resumed_params = serde_json::from_str::<serde_json::Value>(&resumed).unwrap()["model"]
        ["params"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(full_params, resumed_params);
}

#[test]
fn missing_supervision_with_zero_ot_weight_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &["--no-profile"]);
    // Provide a hand-written profile so only the supervision is missing.
    std::fs::write(
        dir.path().join("profile.json"),
        "{\"schema_version\":1,\"atoms\":[[0.0,0.5],[1.0,0.5]]}",
    )
    .unwrap();
    let out = fit_fast(dir.path(), &["--c-ot", "0"]);
    assert_exit(&out, 1);
}

#[test]
fn all_zero_weights_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    let out = fit_fast(dir.path(), &["--c-ot", "0", "--c-pw", "0", "--c-fix", "0"]);
    assert_exit(&out, 1);
}

#[test]
fn eval_without_model_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    let out = run(&["eval", "--run-dir", dir.path().to_str().unwrap(), "--correlate"]);
    assert_exit(&out, 3);
}

#[test]
fn fit_without_run_dir_artifacts_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_fast(dir.path(), &[]);
    assert_exit(&out, 3);
}

#[test]
fn csv_profile_import_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos(dir.path(), &[]);
    let csv_path = dir.path().join("expert.csv");
    std::fs::write(&csv_path, "location,weight\n-1.0,0.5\n4.0,0.5\n").unwrap();
    let out = fit_fast(dir.path(), &["--profile-file", csv_path.to_str().unwrap()]);
    assert_exit(&out, 0);
}

/// Shrinks the epoch budget in config.json so sweep tests stay fast.
fn set_epochs(dir: &Path, n_epochs: u64) {
    let path = dir.join("config.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    config["train"]["n_epochs"] = n_epochs.into();
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

#[test]
fn noise_sweep_writes_one_row_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos_n(dir.path(), "8", &[]);
    set_epochs(dir.path(), 25);
    let out = run(&[
        "eval",
        "--run-dir",
        dir.path().to_str().unwrap(),
        "--noise",
        "0.1,0.5,1",
        "--n-seeds",
        "2",
        "--heldout-n",
        "20",
        "--sweep-pairs",
        "5",
        "--fixed-budget",
        "2",
    ]);
    assert_exit(&out, 0);
    let noise = std::fs::read_to_string(dir.path().join("noise.csv")).unwrap();
    let mut lines = noise.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sigma,n_seeds,mean_pearson,std_pearson"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn sweep_command_writes_gamma_table() {
    let dir = tempfile::tempdir().unwrap();
    gen_demos_n(dir.path(), "8", &[]);
    set_epochs(dir.path(), 25);
    let out = run(&[
        "sweep",
        "--run-dir",
        dir.path().to_str().unwrap(),
        "--kind",
        "gamma",
        "--gammas",
        "0,0.9",
        "--n-seeds",
        "2",
        "--heldout-n",
        "20",
        "--sweep-pairs",
        "5",
        "--fixed-budget",
        "2",
        "--jobs",
        "1",
    ]);
    assert_exit(&out, 0);
    let gamma = std::fs::read_to_string(dir.path().join("gamma.csv")).unwrap();
    assert_eq!(gamma.lines().count(), 3);
    assert!(gamma.starts_with("gamma,n_seeds,mean_pearson,std_pearson"));
}
