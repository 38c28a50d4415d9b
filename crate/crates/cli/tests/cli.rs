use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cflp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cflp")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cflp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path) -> String {
    let data = dir.join("data");
    ok(&["generate", "--out", data.to_str().unwrap(), "--nodes", "100"]);
    data.to_str().unwrap().to_string()
}

const SMALL: [&str; 10] =
    ["--embed", "eigenmap:8", "--hidden", "8", "--epochs", "10", "--ft-epochs", "3", "--seeds", "1"];

#[test]
fn run_then_eval_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let out = dir.path().join("out");
    let mut args =
        vec!["run", "--dataset", &data, "--treatment", "louvain", "--arch", "sage", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let stdout = ok(&args);
    let agg: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(agg["config"]["treatment"], "louvain");
    assert_eq!(agg["config"]["arch"], "sage");
    assert!(out.join("seed_0/treatment_labels.txt").is_file());

    let mut args = vec!["eval-only", "--dataset", &data, "--treatment", "louvain", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let eval: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("seed_0/report.json")).unwrap()).unwrap();
    assert_eq!(eval["auc"], report["auc"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let conf = dir.path().join("run.conf");
    fs::write(&conf, format!("dataset = {data}\nalpha = 0.25\nbeta = 3\ntreatment = commn\n")).unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["run", "--config", conf.to_str().unwrap(), "--beta", "0", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let agg: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(agg["config"]["alpha"], "0.25");
    assert_eq!(agg["config"]["beta"], "0");
    assert_eq!(agg["config"]["treatment"], "commn");
}

#[test]
fn match_only_with_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let out = dir.path().join("out");
    let stdout = ok(&[
        "match-only",
        "--dataset",
        &data,
        "--treatment",
        "katz",
        "--embed",
        "eigenmap:8",
        "--out",
        out.to_str().unwrap(),
        "--gamma-sweep",
        "5,30",
    ]);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary[0]["treatment"], "katz");
    let csv = fs::read_to_string(out.join("seed_0/counterfactual.csv")).unwrap();
    assert!(csv.starts_with("query_i,query_j,t,label,matched_a,matched_b,t_cf,a_cf\n"));
    let sweep = fs::read_to_string(out.join("gamma_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn compare_single_treatment_reports_undefined_tau() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let out = dir.path().join("out");
    let mut args =
        vec!["compare-treatments", "--dataset", &data, "--treatments", "kcore", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let stdout = ok(&args);
    assert!(stdout.contains("kcore"));
    assert!(stdout.contains("undefined"));
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = cflp(&["run", "--dataset", missing.to_str().unwrap()]);
    assert!(!out.status.success());

    let data = generate(dir.path());
    let bad = cflp(&["run", "--dataset", &data, "--treatment", "bogus"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bogus"));

    let broken = dir.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(broken.join("edges.txt"), "0 1\n1 x\n").unwrap();
    let out = cflp(&["run", "--dataset", broken.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[load]"), "{err}");
}
