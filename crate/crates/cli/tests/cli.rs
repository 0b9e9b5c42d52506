//! End-to-end tests of the `sheetform` binary: every subcommand runs
//! against a tiny generated dataset and leaves the documented artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sheetform"))
}

fn run_ok(args: &[&str]) -> String {
    let Output { status, stdout, stderr } = bin().args(args).output().expect("spawn sheetform");
    assert!(
        status.success(),
        "`sheetform {}` failed\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&stdout),
        String::from_utf8_lossy(&stderr)
    );
    String::from_utf8(stdout).expect("utf-8 stdout")
}

const TINY_CONFIG: &str = r#"{
  "dataset": {
    "mesh": {"nx": 3, "ny": 3},
    "num_cases": {"train": 1, "val": 1, "test": 1},
    "seed": 7
  },
  "model": {"hidden": 8, "layers": 1},
  "train": {"epochs": 1, "seed": 3}
}"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("experiment.json");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_train_evaluate_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let data_s = data.to_string_lossy().into_owned();
    let run_s = run.to_string_lossy().into_owned();

    let out = run_ok(&["gen-data", "--config", &config, "--out", &data_s]);
    assert!(out.contains("train: 1 cases"), "{out}");
    assert!(data.join("manifest.json").exists());
    assert!(data.join("train/train-000.bgt").exists());

    let out = run_ok(&["train", "--config", &config, "--data", &data_s, "--out", &run_s]);
    assert!(out.contains("checkpoint (1 epochs)"), "{out}");
    assert!(run.join("checkpoint.bgc").exists());
    assert!(run.join("curves.csv").exists());
    assert!(run.join("config.json").exists());

    let ckpt = run.join("checkpoint.bgc").to_string_lossy().into_owned();
    let eval_dir = tmp.path().join("eval");
    let eval_s = eval_dir.to_string_lossy().into_owned();
    let out = run_ok(&[
        "eval", "--config", &config, "--checkpoint", &ckpt, "--data", &data_s, "--split", "test",
        "--out", &eval_s,
    ]);
    assert!(out.contains("median E_pos over 1 `test` cases"), "{out}");
    assert!(eval_dir.join("predictions/test-000.bgt").exists());
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "case_id,model,variant,E_pos_mm,E_mae_mm,E_theta_tau,E_com_p_mm,E_theta_rel_p_pct"
    ));
    let curves = std::fs::read_to_string(eval_dir.join("eval_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 11, "header + 10 transitions:\n{curves}");

    // `rollout` produces the same dumps without the summary line.
    let roll_dir = tmp.path().join("rollout");
    let roll_s = roll_dir.to_string_lossy().into_owned();
    let out = run_ok(&[
        "rollout", "--checkpoint", &ckpt, "--data", &data_s, "--split", "val", "--out", &roll_s,
    ]);
    assert!(!out.contains("median"), "{out}");
    assert!(roll_dir.join("predictions/val-000.bgt").exists());

    let att = tmp.path().join("attention.csv");
    let att_s = att.to_string_lossy().into_owned();
    let case = data.join("val/val-000.bgt").to_string_lossy().into_owned();
    let out = run_ok(&["inspect-attention", "--checkpoint", &ckpt, "--case", &case, "--out", &att_s]);
    assert!(out.contains("16 attention edges"), "{out}");
    let table = std::fs::read_to_string(&att).unwrap();
    assert!(table.starts_with("element_id,node_id,alpha,delta_alpha\n"));
}

#[test]
fn flag_overrides_reach_the_run_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let data = tmp.path().join("data").to_string_lossy().into_owned();
    let run = tmp.path().join("run");
    run_ok(&["gen-data", "--config", &config, "--out", &data]);
    run_ok(&[
        "train", "--config", &config, "--data", &data,
        "--out", &run.to_string_lossy(),
        "--aggregator", "mean_vanilla", "--noise", "adaptive", "--variant", "flat", "--seed", "11",
    ]);
    let echoed = std::fs::read_to_string(run.join("config.json")).unwrap();
    assert!(echoed.contains("\"aggregator\": \"mean_vanilla\""), "{echoed}");
    assert!(echoed.contains("\"noise\": \"adaptive\""), "{echoed}");
    assert!(echoed.contains("\"seed\": 11"), "{echoed}");
}

#[test]
fn same_seed_reproduces_the_dataset_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["gen-data", "--config", &config, "--seed", "9", "--out", &a.to_string_lossy()]);
    run_ok(&["gen-data", "--config", &config, "--seed", "9", "--out", &b.to_string_lossy()]);
    for file in ["manifest.json", "train/train-000.bgt", "test/test-000.bgt"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs between identical-seed runs"
        );
    }
}

#[test]
fn noise_tuning_reports_a_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let data = tmp.path().join("data").to_string_lossy().into_owned();
    let out = tmp.path().join("tune");
    run_ok(&["gen-data", "--config", &config, "--out", &data]);
    let stdout = run_ok(&["tune-noise", "--config", &config, "--data", &data, "--out", &out.to_string_lossy()]);
    assert_eq!(stdout.matches("<- selected").count(), 1, "{stdout}");
    let report = std::fs::read_to_string(out.join("tune_noise.csv")).unwrap();
    assert!(report.starts_with("lambda,E_pos_mm,selected\n"));
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn ablation_grid_writes_ranked_tables() {
    let tmp = tempfile::tempdir().unwrap();
    // The hierarchical half of the grid needs coarsening settings that fit
    // the 3x3 mesh (the default ratio would leave too few coarse vertices).
    let config = tmp.path().join("experiment.json").to_string_lossy().into_owned();
    std::fs::write(
        &config,
        r#"{
          "dataset": {
            "mesh": {"nx": 3, "ny": 3},
            "num_cases": {"train": 1, "val": 1, "test": 1},
            "seed": 7
          },
          "model": {
            "hidden": 8, "layers": 1,
            "hierarchy": {"levels": 1, "ratio": 0.8, "fine_layers": 1, "coarse_layers": 1}
          },
          "train": {"epochs": 1, "seed": 3}
        }"#,
    )
    .unwrap();
    let data = tmp.path().join("data").to_string_lossy().into_owned();
    let out = tmp.path().join("ablate");
    run_ok(&["gen-data", "--config", &config, "--out", &data]);
    let stdout = run_ok(&[
        "ablate", "--config", &config, "--data", &data, "--out", &out.to_string_lossy(),
        "--seeds", "3",
    ]);
    assert!(stdout.contains("24 cells completed, 0 quarantined"), "{stdout}");
    let table = std::fs::read_to_string(out.join("rank_by_E_pos_mm.csv")).unwrap();
    assert_eq!(table.lines().count(), 25, "header + 24 ranked cells");
    assert!(out.join("quarantine.json").exists());
}

#[test]
fn malformed_configs_fail_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"dataset": {"surprise": 1}}"#).unwrap();
    let out = bin()
        .args(["gen-data", "--config", &path.to_string_lossy(), "--out", "unused"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown field"), "stderr: {stderr}");

    let out = bin()
        .args(["train", "--variant", "bogus", "--data", "unused", "--out", "unused"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown variant"), "stderr: {stderr}");
}
