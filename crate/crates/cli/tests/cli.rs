use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use whitekit::matrix::least_squares;
use whitekit::store::{load_whitening_model, read_matrix, synth_fixture, SynthSpec, Task};
use ndarray::{Array2, Axis};

fn whitekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitekit"))
        .args(args)
        .env_remove("WHITEKIT_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = whitekit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path, spec: SynthSpec) -> String {
    synth_fixture(&spec, dir).unwrap();
    dir.join("manifest.json").to_str().unwrap().to_owned()
}

fn cls(dir: &Path, anisotropy: f64, seed: u64) -> String {
    fixture(dir, SynthSpec { n: 400, d: 8, anisotropy, seed, ..SynthSpec::default() })
}

fn quick_probe() -> Vec<&'static str> {
    vec!["--epochs", "15", "--folds", "5", "--l2", "0,0.001"]
}

#[test]
fn whiten_then_isoscore_is_near_one() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 3.0, 1);
    let out = tmp.path().join("white");
    let msg = ok(&["whiten", "--manifest", &m, "--kind", "pca", "--out", s(&out)]);
    assert!(msg.contains("eps_used"), "{msg}");
    assert!(msg.contains("400x8"), "{msg}");

    let iso = ok(&["isoscore", "--manifest", s(&out), "--csv"]);
    let score: f64 = iso.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(score >= 0.99, "{iso}");
}

#[test]
fn zca_model_is_symmetric_on_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 2.0, 2);
    let out = tmp.path().join("white");
    ok(&["whiten", "--manifest", &m, "--kind", "zca", "--out", s(&out)]);
    let (model, scope) = load_whitening_model(out.join("whitening.json")).unwrap();
    assert_eq!(scope, whitekit::FitScope::AllData);
    let asym = (&model.w - &model.w.t()).fold(0.0_f64, |a, v| a.max(v.abs()));
    assert!(asym <= 1e-8);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 0.0, 3);
    let out = whitekit(&["whiten", "--manifest", &m, "--kind", "diagonal", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));

    let csv = tmp.path().join("p.csv");
    let out = whitekit(&["project", "--manifest", &m, "--k", "9", "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!csv.exists());

    let out = whitekit(&["whiten", "--manifest", &m, "--kind", "zca", "--fit-scope", "train", "--out", s(&tmp.path().join("w"))]);
    assert_eq!(out.status.code(), Some(2), "no splits file, so train scope is a usage error");
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    let out = whitekit(&["eval-cls", "--manifest", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));

    let m = cls(&tmp.path().join("raw"), 0.0, 4);
    let emb = tmp.path().join("raw/embeddings.emb");
    let mut bytes = fs::read(&emb).unwrap();
    bytes[40] ^= 0x10;
    fs::write(&emb, bytes).unwrap();
    let out = whitekit(&["isoscore", "--manifest", &m]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn eval_cls_prints_two_rows_and_logs_records() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 2.0, 5);
    let runs = tmp.path().join("runs");
    let mut args = vec!["eval-cls", "--manifest", &m, "--kind", "zca", "--csv", "--out", s(&runs)];
    args.extend(quick_probe());
    let table = ok(&args);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "model,synthetic,delta");
    assert!(lines[2].starts_with("synthetic_W(zca),"));
    assert_eq!(lines.len(), 3);

    // Same flags again: values in the log are bitwise equal.
    ok(&args);
    let log = fs::read_to_string(runs.join("runs.jsonl")).unwrap();
    let values: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values.len(), 4);
    assert_eq!(values[0].to_bits(), values[2].to_bits());
    assert_eq!(values[1].to_bits(), values[3].to_bits());
    assert!(runs.join("synthetic.accuracy.csv").exists());

    let report = ok(&["report", "--runs", s(&runs.join("runs.jsonl")), "--csv"]);
    assert!(report.starts_with("model,synthetic,Avg"), "{report}");
}

#[test]
fn identical_raw_and_whitened_inputs_give_zero_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 0.0, 6);
    let mut args = vec!["eval-cls", "--manifest", &m, "--whitened-manifest", &m, "--csv"];
    args.extend(quick_probe());
    let table = ok(&args);
    assert!(table.lines().nth(2).unwrap().ends_with(",0.00"), "{table}");
}

#[test]
fn eval_sts_rows_and_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(
        &tmp.path().join("sts"),
        SynthSpec { task: Task::Sts, n: 500, d: 16, anisotropy: 5.0, seed: 7, ..SynthSpec::default() },
    );
    let raw_only = ok(&["eval-sts", "--manifest", &m, "--csv"]);
    assert_eq!(raw_only.lines().count(), 2);
    assert_eq!(raw_only.lines().next().unwrap(), "model,synthetic");

    let both = ok(&["eval-sts", "--manifest", &m, "--kind", "zca", "--csv"]);
    let delta: f64 = both.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(delta > 0.0, "{both}");
}

#[test]
fn project_writes_label_column_and_is_affine_across_whitening() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 2.0, 8);
    let two = tmp.path().join("p2.csv");
    ok(&["project", "--manifest", &m, "--k", "2", "--out", s(&two)]);
    let text = fs::read_to_string(&two).unwrap();
    assert_eq!(text.lines().next().unwrap(), "pc1,pc2,label");
    assert_eq!(text.lines().count(), 401);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3));

    let white = tmp.path().join("white");
    ok(&["whiten", "--manifest", &m, "--kind", "chol", "--out", s(&white)]);
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    ok(&["project", "--manifest", &m, "--k", "8", "--out", s(&a)]);
    ok(&["project", "--manifest", s(&white), "--k", "8", "--out", s(&b)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let read = |p: &Path| -> Array2<f64> {
        let rows: Vec<Vec<f64>> = fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(8).map(|v| v.parse().unwrap()).collect())
            .collect();
        Array2::from_shape_vec((rows.len(), 8), rows.concat()).unwrap()
    };
    let (pa, pb) = (read(&a), read(&b));
    // Append a ones column so the fit may include a translation.
    let design = ndarray::concatenate![Axis(1), pa, Array2::ones((pa.nrows(), 1))];
    let coef = least_squares(&design, &pb).unwrap();
    let residual = (design.dot(&coef) - &pb).fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(residual < 1e-6, "affine residual {residual}");
}

#[test]
fn isoscore_paired_mode_and_files() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cls(&tmp.path().join("raw"), 4.0, 9);
    let white = tmp.path().join("white");
    ok(&["whiten", "--manifest", &m, "--kind", "zca-cor", "--out", s(&white)]);
    let paired = ok(&["isoscore", "--manifest", &m, "--compare", s(&white), "--label", "toy"]);
    let lines: Vec<&str> = paired.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("toy,raw,"));
    assert!(lines[2].starts_with("toy,whitened,"));

    // A rank-1 cloud given as CSV scores close to zero.
    let csv = tmp.path().join("line.csv");
    let body: String = (0..50).map(|i| {
        let t = i as f64 / 7.0 - 3.0;
        format!("{},{},{}\n", 1.0 + t, 2.0 - 2.0 * t, 0.5 * t)
    }).collect();
    fs::write(&csv, body).unwrap();
    let out = ok(&["isoscore", "--embeddings", s(&csv), "--csv"]);
    let score: f64 = out.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(score <= 0.05, "{out}");
    let emb = read_matrix(tmp.path().join("raw/embeddings.emb")).unwrap();
    assert_eq!(emb.dim(), (400, 8));
}

#[test]
fn data_dir_resolves_relative_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    cls(&tmp.path().join("ds"), 0.0, 10);
    let out = Command::new(env!("CARGO_BIN_EXE_whitekit"))
        .args(["isoscore", "--manifest", "ds"])
        .env("WHITEKIT_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("isoscore "));
}

#[test]
fn synth_command_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["synth", "--task", "sts", "--n", "100", "--d", "6", "--seed", "3", "--out", s(dir)]);
    }
    for f in ["left.emb", "right.emb", "gold.txt", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = whitekit(&["synth", "--d", "2", "--classes", "5", "--out", s(&tmp.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}
