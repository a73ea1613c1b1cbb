use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dosefactor::manifest::RunManifest;
use dosefactor_core::posterior::CurveSummary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dosefactor"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small aligned dataset written through `generate`.
fn micro_data(root: &Path) -> PathBuf {
    let dir = root.join("data");
    let o = run(&["generate", "--family", "aligned", "--grid", "N=24,D=5,S=8,K=2,J=1", "--seed", "5", "--out", p(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

fn fit(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let file = |name: &str| data.join(name).to_str().unwrap().to_string();
    let mut args: Vec<String> = vec![
        "fit".into(),
        "--features".into(),
        file("features.csv"),
        "--responses".into(),
        file("responses.csv"),
        "--kinds".into(),
        file("kinds.csv"),
        "--holdout".into(),
        file("holdout.txt"),
        "--out".into(),
        p(out).into(),
    ];
    for a in ["--iter", "40", "--burn-in", "20", "--thin", "2", "--k", "3", "--j", "2"].iter().chain(extra) {
        args.push(a.to_string());
    }
    bin().args(&args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn output_hashes(dir: &Path) -> Vec<(PathBuf, String)> {
    manifest(dir).outputs.into_iter().map(|f| (f.path, f.sha256)).collect()
}

#[test]
fn micro_fit_writes_manifest_and_summaries() {
    let root = tempfile::tempdir().unwrap();
    let data = micro_data(root.path());
    let out = root.path().join("run");
    let o = fit(&data, &out, &["--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("K adequate"));
    let m = manifest(&out);
    assert_eq!(m.command, "fit");
    assert_eq!(m.seed, 3);
    let roles: BTreeSet<&str> = m.inputs.iter().map(|f| f.role.as_str()).collect();
    assert_eq!(roles, BTreeSet::from(["features", "responses", "kinds", "holdout"]));
    assert!(m.inputs.iter().all(|f| f.sha256.len() == 64));
    assert!(m.timings.iter().any(|t| t.stage == "sample_align_summarize"));
    let summaries: Vec<CurveSummary> = serde_json::from_str(&fs::read_to_string(out.join("summaries.json")).unwrap()).unwrap();
    assert_eq!(summaries.len(), 24);
    for f in ["priority.csv", "components.json", "preprocess_report.json", "holdout.json", "draws/context.json", "draws/chain_1/trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_outputs_for_any_thread_count() {
    let root = tempfile::tempdir().unwrap();
    let data = micro_data(root.path());
    let (a, b, c) = (root.path().join("a"), root.path().join("b"), root.path().join("c"));
    assert!(fit(&data, &a, &["--seed", "9", "--threads", "1"]).status.success());
    assert!(fit(&data, &b, &["--seed", "9", "--threads", "2"]).status.success());
    assert!(fit(&data, &c, &["--seed", "10"]).status.success());
    assert_eq!(output_hashes(&a), output_hashes(&b));
    assert_ne!(output_hashes(&a), output_hashes(&c));
}

#[test]
fn missing_kinds_is_an_input_error_naming_the_flag() {
    let root = tempfile::tempdir().unwrap();
    let data = micro_data(root.path());
    fs::remove_file(data.join("kinds.csv")).unwrap();
    let o = fit(&data, &root.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--kinds"), "{}", stderr(&o));

    let o = run(&["fit", "--features", "f.csv", "--responses", "r.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--kinds"), "{}", stderr(&o));
}

#[test]
fn follow_up_commands_read_the_draws() {
    let root = tempfile::tempdir().unwrap();
    let data = micro_data(root.path());
    let out = root.path().join("run");
    assert!(fit(&data, &out, &["--seed", "4"]).status.success());
    let draws = out.join("draws");
    let fitted: Vec<CurveSummary> = serde_json::from_str(&fs::read_to_string(out.join("summaries.json")).unwrap()).unwrap();
    let train = fitted.iter().find(|s| !s.holdout).unwrap();

    let pred = root.path().join("pred");
    let o = run(&["predict", "--draws", p(&draws), "--items", &train.item_id, "--plot-data", "--out", p(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again: Vec<CurveSummary> = serde_json::from_str(&fs::read_to_string(pred.join("summaries.json")).unwrap()).unwrap();
    assert_eq!(&again[0], train);
    assert!(pred.join("plots").join(format!("{}.csv", train.item_id)).exists());

    let o = run(&["distance", "--draws", p(&draws), "--query", &train.item_id, "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["neighbors"].as_array().unwrap().len(), 3);

    let dist = root.path().join("dist");
    let o = run(&["distance", "--draws", p(&draws), "--design", "venture-out", "--pick", "2", "--out", p(&dist)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dist.join("distance.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 24 * 23 / 2);

    let summ = root.path().join("summ");
    let o = run(&["summarize", "--draws", p(&draws), "--out", p(&summ)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("K adequate: "));
    assert!(stdout(&o).contains("threshold 0.01"));
    assert!(summ.join("components.json").exists() && summ.join("priority.csv").exists());
}

#[test]
fn corrupt_draws_exit_with_code_three() {
    let root = tempfile::tempdir().unwrap();
    let data = micro_data(root.path());
    let out = root.path().join("run");
    assert!(fit(&data, &out, &[]).status.success());
    let eta = out.join("draws").join("chain_0").join("draws_eta.csv");
    fs::write(&eta, "iter,row,col,value\n22,0,0,nan-ish\n").unwrap();
    let o = run(&["predict", "--draws", p(&out.join("draws"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("corrupt draws"));
}

#[test]
fn one_cell_simulation_writes_one_row_per_metric() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("sim.toml");
    fs::write(&cfg, "[mcmc]\nn_iter = 40\nburn_in = 20\nthin = 2\nn_chains = 1\n").unwrap();
    let out = root.path().join("sim");
    let o = run(&[
        "simulate", "--family", "polynomial", "--grid", "S_rel=1,N=40", "--reps", "1", "--config", p(&cfg), "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("simstudy.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("family,K,J,S_rel,S_irr,rep,metric,value"));
    let metrics: Vec<&str> = lines.map(|l| l.split(',').nth(6).unwrap()).collect();
    let unique: BTreeSet<&str> = metrics.iter().copied().collect();
    assert_eq!(unique.len(), metrics.len());
    assert!(unique.contains("dist_corr") && unique.contains("mspe"));
    assert!(out.join("cells").join("cell_0").join("manifest.json").exists());
    assert!(!out.join("cells").join("cell_1").exists());
}

#[test]
fn bad_family_or_grid_exit_with_code_two() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("sim");
    let o = run(&["simulate", "--family", "spline", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--family", "aligned", "--grid", "K=oops", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("K needs an integer"));
}
