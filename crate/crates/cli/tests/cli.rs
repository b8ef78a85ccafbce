use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--preset",
    "desk",
    "--set",
    "n_farms=2",
    "--set",
    "fields_per_farm=5",
    "--set",
    "pixels_per_field=3",
];

const TINY_MODEL: &[&str] = &[
    "--set", "d=6", "--set", "hidden=5", "--set", "max_epochs=2", "--set", "patience=2", "--set", "batch_size=16",
];

fn mvgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvgf")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mvgf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn generate(dir: &Path, seed: &str) -> String {
    let out = dir.to_str().unwrap();
    ok(&[&["generate", "--out", out, "--seed", seed][..], SMALL].concat());
    dir.join("dataset.jsonl").to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn generation_is_deterministic_per_seed() {
    let root = tempfile::tempdir().unwrap();
    let a = generate(&root.path().join("a"), "7");
    let b = generate(&root.path().join("b"), "7");
    let c = generate(&root.path().join("c"), "8");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let echo = fs::read_to_string(root.path().join("a/config.txt")).unwrap();
    assert!(echo.contains("command = generate") && echo.contains("seed = 7"));
    assert!(root.path().join("a/generator.json").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().to_str().unwrap();
    assert_eq!(mvgf(&["generate", "--out", out, "--set", "n_farms=0"]).status.code(), Some(2));
    assert_eq!(mvgf(&["generate", "--out", out, "--set", "colour=red"]).status.code(), Some(2));
    assert_eq!(mvgf(&["train", "--out", out, "--dataset", "/nonexistent/data.jsonl"]).status.code(), Some(3));
    let data = generate(&root.path().join("d"), "1");
    assert_eq!(mvgf(&["ablate", "--out", out, "--dataset", &data, "--axis", "depth"]).status.code(), Some(2));
    assert_eq!(mvgf(&["train", "--out", out, "--dataset", &data, "--folds", "99"]).status.code(), Some(2));
    assert_eq!(mvgf(&["train", "--out", out, "--dataset", &data, "--split", "loyo", "--year", "1999"]).status.code(), Some(2));
    assert_eq!(mvgf(&["evaluate", "--out", out, "--dataset", &data, "--run", out]).status.code(), Some(3));
    assert_eq!(mvgf(&["train", "--out", out, "--dataset", &data, "--set", "learning_rate=1e300"]).status.code(), Some(4));
    assert_eq!(mvgf(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_evaluate_and_weights_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let data = generate(&root.path().join("data"), "3");
    let run = root.path().join("run");
    let run_s = run.to_str().unwrap();
    let train_args = [&["train", "--dataset", &data, "--out", run_s, "--folds", "2", "--seed", "5"][..], TINY_MODEL].concat();
    ok(&train_args);
    for f in 0..2 {
        assert!(run.join(format!("fold{f}.bin")).exists());
        assert!(run.join(format!("fold{f}.history.csv")).exists());
        assert!(run.join(format!("fold{f}.norm.json")).exists());
    }
    assert!(!run.join("fold2.bin").exists());
    let metrics = fs::read(run.join("metrics.csv")).unwrap();

    let rerun = root.path().join("rerun");
    let mut again = train_args.clone();
    again[4] = rerun.to_str().unwrap();
    ok(&again);
    assert_eq!(fs::read(rerun.join("metrics.csv")).unwrap(), metrics);
    assert_eq!(fs::read(rerun.join("fold1.bin")).unwrap(), fs::read(run.join("fold1.bin")).unwrap());

    let replay = root.path().join("replay");
    let echo = run.join("config.txt");
    ok(&["train", "--config", echo.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(fs::read(replay.join("metrics.csv")).unwrap(), metrics);

    let eval = root.path().join("eval");
    ok(&["evaluate", "--dataset", &data, "--run", run_s, "--out", eval.to_str().unwrap()]);
    assert_eq!(fs::read(eval.join("metrics.csv")).unwrap(), metrics);
    let coverage = fs::read_to_string(eval.join("coverage.csv")).unwrap();
    assert_eq!(coverage.lines().count(), 1 + 10);

    let weights = root.path().join("weights");
    ok(&["weights", "--dataset", &data, "--run", run_s, "--out", weights.to_str().unwrap()]);
    for row in csv_rows(&weights.join("fusion_weights_field.csv")) {
        assert_eq!(row.len(), 4);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(!weights.join("contributions_field.csv").exists());
}

#[test]
fn linear_head_run_exports_contributions() {
    let root = tempfile::tempdir().unwrap();
    let data = generate(&root.path().join("data"), "4");
    let run = root.path().join("run");
    let args = [&["train", "--dataset", &data, "--out", run.to_str().unwrap(), "--folds", "2", "--model", "mvgf-lr"][..], TINY_MODEL]
        .concat();
    ok(&args);
    let weights = root.path().join("weights");
    ok(&["weights", "--dataset", &data, "--run", run.to_str().unwrap(), "--out", weights.to_str().unwrap()]);
    let text = fs::read_to_string(weights.join("contributions_field.csv")).unwrap();
    assert!(text.starts_with("fold,field_id,c_s2,c_weather,c_dem,c_soil,weighted_s2"));
    assert_eq!(text.lines().count(), 1 + 10);

    let lstm = root.path().join("lstm");
    let args = [&["train", "--dataset", &data, "--out", lstm.to_str().unwrap(), "--folds", "2", "--model", "lstm-s2r"][..], TINY_MODEL]
        .concat();
    ok(&args);
    let out = mvgf(&["weights", "--dataset", &data, "--run", lstm.to_str().unwrap(), "--out", weights.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn merger_ablation_has_six_rows() {
    let root = tempfile::tempdir().unwrap();
    let data = generate(&root.path().join("data"), "6");
    let out = root.path().join("ablate");
    let args = [
        &["ablate", "--dataset", &data, "--out", out.to_str().unwrap(), "--axis", "merger", "--folds", "2", "--workers", "2"][..],
        TINY_MODEL,
        &["--set", "fold_limit=1"],
    ]
    .concat();
    ok(&args);
    let table = fs::read_to_string(out.join("ablation_merger.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "approach,merge,field_mae,field_mape,field_r2,subfield_mae,subfield_mape,subfield_r2");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("adaptive-fusion,softmax-weighted-sum,"));
    let again = root.path().join("again");
    let mut args2 = args.clone();
    args2[4] = again.to_str().unwrap();
    ok(&args2);
    assert_eq!(fs::read_to_string(again.join("ablation_merger.csv")).unwrap(), table);
}
