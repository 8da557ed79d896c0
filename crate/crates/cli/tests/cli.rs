use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ghpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghpinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ghpinn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Tiny network and coarse grid so that whole pipelines run in seconds.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{
  "generation": { "grid": { "start": 0.0, "end": 72.0, "step": 0.1 } },
  "training": { "iterations": 60, "hidden_layers": 1, "hidden_width": 6,
                "collocation_count": 50, "log_every": 20 }
}"#,
    )
    .unwrap();
    path
}

fn generate_small(tmp: &TempDir, cfg: &Path, seed: &str) -> PathBuf {
    let dir = tmp.path().join(format!("data{seed}"));
    ok(&[
        "generate",
        "--config",
        s(cfg),
        "--seed",
        seed,
        "--output",
        s(&dir),
    ]);
    dir.join("dataset.json")
}

#[test]
fn default_generation_records_benchmark_noise() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("gen");
    ok(&["generate", "--default", "--output", s(&out)]);
    let ds = json(&out.join("dataset.json"));
    assert_eq!(ds["meta"]["sigma_T"], 0.30);
    assert_eq!(ds["meta"]["sigma_H"], 1.00);
    assert_eq!(ds["meta"]["fraction"], 0.25);
    assert_eq!(ds["meta"]["n_obs"], 1800);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "generate");
    assert_eq!(m["resolved_config"]["generation"]["sigma_T"], 0.30);
    let reference = fs::read_to_string(out.join("reference.csv")).unwrap();
    assert_eq!(reference.lines().next(), Some("t,T,H"));
    assert_eq!(reference.lines().count(), 7202);
}

#[test]
fn noiseless_full_observation_equals_reference() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("gen");
    ok(&[
        "generate",
        "--fraction",
        "1.0",
        "--sigma-T",
        "0",
        "--sigma-H",
        "0",
        "--output",
        s(&out),
    ]);
    let ds = json(&out.join("dataset.json"));
    assert_eq!(ds["observations"]["t"], ds["reference"]["t"]);
    assert_eq!(ds["observations"]["T"], ds["reference"]["T"]);
    assert_eq!(ds["observations"]["H"], ds["reference"]["H"]);
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["generate", "--seed", "7", "--output", s(&a)]);
    ok(&["generate", "--seed", "7", "--output", s(&b)]);
    assert_eq!(
        fs::read(a.join("dataset.json")).unwrap(),
        fs::read(b.join("dataset.json")).unwrap()
    );
}

#[test]
fn missing_dataset_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = ghpinn(&[
        "train",
        s(&tmp.path().join("nope.json")),
        "--method",
        "pinn",
        "--output",
        s(&tmp.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn bad_config_fields_are_named() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"training": {"learning_rate": -1.0}}"#).unwrap();
    let ds = generate_small(&tmp, &small_config(tmp.path()), "0");
    let out = ghpinn(&[
        "train",
        s(&ds),
        "--method",
        "pinn",
        "--config",
        s(&bad),
        "--output",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    fs::write(&bad, r#"{"training": {"iteratons": 5}}"#).unwrap();
    let out = ghpinn(&["generate", "--config", s(&bad), "--output", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training.iteratons"));

    fs::write(&bad, r#"{"generation": {"fraction": "all"}}"#).unwrap();
    let out = ghpinn(&["generate", "--config", s(&bad), "--output", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generation.fraction"));
}

#[test]
fn divergence_exits_with_code_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let ds = generate_small(&tmp, &cfg, "0");
    let hot = tmp.path().join("hot.json");
    fs::write(
        &hot,
        r#"{"training": {"iterations": 10, "hidden_width": 4, "initial_coefficient": 1e200}}"#,
    )
    .unwrap();
    let out = ghpinn(&[
        "train",
        s(&ds),
        "--method",
        "pinn",
        "--config",
        s(&hot),
        "--output",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteration 0"));
}

#[test]
fn train_and_evaluate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let ds = generate_small(&tmp, &cfg, "3");
    let (pinn, base) = (tmp.path().join("pinn"), tmp.path().join("base"));
    ok(&[
        "train",
        s(&ds),
        "--method",
        "pinn",
        "--config",
        s(&cfg),
        "--output",
        s(&pinn),
    ]);
    ok(&[
        "train",
        s(&ds),
        "--method",
        "baseline",
        "--config",
        s(&cfg),
        "--output",
        s(&base),
    ]);

    let params = json(&pinn.join("params.json"));
    for name in ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"] {
        assert!(params[name].as_f64().unwrap() > 0.0, "{name}");
    }
    assert_eq!(params["phi"].as_array().unwrap().len(), 8);
    let m = json(&pinn.join("manifest.json"));
    assert_eq!(m["method"], "pinn");
    assert_eq!(m["seeds"][0], 3);

    let history = fs::read_to_string(base.join("loss_history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("iter,l_data,l_phys,l_ic,l_total"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cols[2], cols[3]), (0.0, 0.0));
    }

    let eval = tmp.path().join("eval");
    let out = ok(&[
        "evaluate",
        "--pinn",
        s(&pinn),
        "--baseline",
        s(&base),
        "--dataset",
        s(&ds),
        "--output",
        s(&eval),
    ]);
    let table = fs::read_to_string(eval.join("comparison.txt")).unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains(&table));
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(
        header,
        ["Method", "RMSE_T", "MAE_T", "R2_T", "RMSE_H", "MAE_H", "R2_H"]
    );
    for line in table.lines().skip(1) {
        for v in line.split_whitespace().rev().take(6) {
            assert_eq!(v.split('.').nth(1).map(str::len), Some(4), "{line}");
        }
    }
    let recon = fs::read_to_string(eval.join("reconstruction.csv")).unwrap();
    assert_eq!(
        recon.lines().next(),
        Some("t,reference_T,reference_H,pinn_T,pinn_H,baseline_T,baseline_H,obs_flag")
    );
    assert_eq!(recon.lines().count(), 722);
    let observed = recon.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(observed as u64, json(&ds)["meta"]["n_obs"].as_u64().unwrap());
    for f in [
        "comparison.json",
        "recovery.json",
        "recovery.txt",
        "forcing.csv",
        "loss_history.csv",
        "parameters.csv",
    ] {
        assert!(eval.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(eval.join("parameters.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );

    // A dataset that differs from the training one is refused.
    let tampered = tmp.path().join("tampered.json");
    fs::write(
        &tampered,
        fs::read_to_string(&ds)
            .unwrap()
            .replacen("\"seed\": 3", "\"seed\": 4", 1),
    )
    .unwrap();
    let out = ghpinn(&[
        "evaluate",
        "--pinn",
        s(&pinn),
        "--baseline",
        s(&base),
        "--dataset",
        s(&tampered),
        "--output",
        s(&eval),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));

    // Swapped run directories are refused as well.
    let out = ghpinn(&[
        "evaluate",
        "--pinn",
        s(&base),
        "--baseline",
        s(&pinn),
        "--dataset",
        s(&ds),
        "--output",
        s(&eval),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_is_reproducible_from_manifest_single_threaded() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let ds = generate_small(&tmp, &cfg, "1");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "--jobs",
        "1",
        "train",
        s(&ds),
        "--method",
        "pinn",
        "--config",
        s(&cfg),
        "--output",
        s(&a),
    ]);
    let manifest = a.join("manifest.json");
    ok(&[
        "train",
        s(&ds),
        "--method",
        "pinn",
        "--config",
        s(&manifest),
        "--output",
        s(&b),
        "--jobs",
        "1",
    ]);
    for f in ["network.json", "params.json", "loss_history.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn sweep_rows_and_resume() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--config", s(&cfg), "--output", s(&out)]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(
        rows[0],
        "sigma_mult,seed,method,rmse_T,mae_T,r2_T,rmse_H,mae_H,r2_H"
    );
    // 3 multipliers x 3 seeds x 2 methods, plus a median row per
    // (multiplier, method).
    assert_eq!(rows.len() - 1, 24);
    assert_eq!(rows.iter().filter(|r| r.contains(",median,")).count(), 6);
    assert_eq!(fs::read_dir(out.join("cells")).unwrap().count(), 9);
    for cell in fs::read_dir(out.join("cells")).unwrap() {
        let cell = cell.unwrap().path();
        assert!(cell.join("cell.json").exists() && cell.join("manifest.json").exists());
    }

    // Simulate an interruption: one cell lost, one half-written.
    fs::remove_dir_all(out.join("cells/mult2_seed1")).unwrap();
    fs::create_dir_all(out.join("cells/.mult2_seed1.partial")).unwrap();
    let again = ok(&["sweep", "--config", s(&cfg), "--output", s(&out)]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("8 of 9 cells already complete"));
    assert_eq!(csv_rows(&out.join("sweep.csv")), rows);

    // A different configuration must not reuse these cells.
    let clash = ghpinn(&[
        "sweep",
        "--config",
        s(&cfg),
        "--sigma-H",
        "3",
        "--output",
        s(&out),
    ]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn single_multiplier_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--config",
        s(&cfg),
        "--multipliers",
        "1",
        "--seed",
        "5",
        "--output",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len() - 1, 4);
    assert!(rows[1..].iter().all(|r| r.starts_with("1,")));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["resolved_config"]["multipliers"], serde_json::json!([1.0]));
    assert_eq!(m["seeds"], serde_json::json!([5]));
}

#[test]
fn reproduce_pipeline_reports_every_benchmark_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("repro");
    let run = ok(&["reproduce-paper", "--config", s(&cfg), "--output", s(&out)]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    for id in 6..=10 {
        assert!(
            stdout.contains(&format!("] {id:>2} ")),
            "criterion {id} missing from summary:\n{stdout}"
        );
    }
    assert!(stdout.contains("reference 36%") && stdout.contains("reference 48%"));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["checks"].as_array().unwrap().len(), 5);
    assert_eq!(summary["seeds"], serde_json::json!([0, 1, 2]));
    for dir in [
        "data/seed2",
        "runs/seed0/pinn",
        "runs/seed1/baseline",
        "eval/seed2",
        "sweep",
    ] {
        assert!(out.join(dir).join("manifest.json").exists(), "{dir}");
    }
    // Nominal cells come from the per-seed runs.
    let cell = json(&out.join("sweep/cells/mult1_seed0/cell.json"));
    let eval = json(&out.join("eval/seed0/comparison.json"));
    assert_eq!(cell["pinn"]["Ok"]["metrics"], eval["methods"][1]["metrics"]);
    assert_eq!(csv_rows(&out.join("sweep/sweep.csv")).len() - 1, 24);
}
