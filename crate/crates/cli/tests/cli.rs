use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dissonance"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{
  "datasets": [{"source": "iris", "models": ["gaussian_nb", "knn_classifier", "decision_tree"]}],
  "second_level_models": ["ols_linear", "ridge"],
  "n": 1,
  "m": 2,
  "master_seed": 3,
  "lime": {"n_samples": 200},
  "shap": {"background_size": 20}
}"#,
    )
    .unwrap();
    path
}

#[test]
fn help_lists_every_subcommand() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["train-explain", "compare", "study1", "study2", "report", "run-all"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(dissonance_cli::run_cli(["dissonance", "study2", "--bogus"]), 1);
}

#[test]
fn study2_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("results");
    let code = dissonance_cli::run_cli([
        "dissonance".as_ref(),
        "study2".as_ref(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code, 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["master_seed"], 3);
    let files = manifest["files"].as_array().unwrap();
    for f in files {
        assert!(out.join(f["path"].as_str().unwrap()).is_file());
    }
    assert!(files.iter().any(|f| f["path"] == "study2/variances.csv" && f["stage"] == "study2"));
}

#[test]
fn flags_override_config_and_compare_reads_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("te");
    let status = bin()
        .args(["train-explain", "--seed", "11", "--models", "gaussian_nb", "--explainer-samples", "300", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"master_seed\": 11"));
    let summary = fs::read_to_string(out.join("preliminary/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2, "{summary}");

    let ex = out.join("explanations");
    let cmp = tmp.path().join("cmp");
    let status = bin()
        .arg("compare")
        .arg("--shap")
        .arg(ex.join("iris_gaussian_nb_r0_shap.csv"))
        .arg("--lime")
        .arg(ex.join("iris_gaussian_nb_r0_lime.csv"))
        .arg("--out")
        .arg(&cmp)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    // A reloaded table lists features in rank order, so compare the rows as a set.
    let sorted = |p: &Path| {
        let mut v: Vec<String> = fs::read_to_string(p).unwrap().lines().map(String::from).collect();
        v.sort();
        v
    };
    assert_eq!(sorted(&cmp.join("compare/correlation.csv")), sorted(&ex.join("iris_gaussian_nb_r0_correlation.csv")));
}

#[test]
fn runtime_failures_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = bin().arg("study1").arg("--config").arg(&missing).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config"));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"datasets": [{"source": "iris"}], "p": 2.0}"#).unwrap();
    assert_eq!(dissonance_cli::run_cli(["dissonance".as_ref(), "study1".as_ref(), "--config".as_ref(), bad.as_os_str()]), 2);

    let cmp = bin()
        .args(["compare", "--shap", "a.csv", "--lime", "b.csv", "--out"])
        .arg(tmp.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(cmp.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cmp.stderr).contains("stage load"));
}

#[test]
fn run_all_is_the_union_of_the_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let paths = |dir: &Path| -> Vec<String> {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_owned()).collect()
    };
    let run = |sub: &str| {
        let out = tmp.path().join(sub);
        let code = dissonance_cli::run_cli(["dissonance".as_ref(), sub.as_ref(), "--config".as_ref(), cfg.as_os_str(), "--out".as_ref(), out.as_os_str()]);
        assert_eq!(code, 0, "{sub}");
        out
    };
    let all = run("run-all");
    let mut union = Vec::new();
    for sub in ["train-explain", "study1", "study2", "report"] {
        let dir = run(sub);
        for p in paths(&dir) {
            assert_eq!(fs::read(dir.join(&p)).unwrap(), fs::read(all.join(&p)).unwrap(), "{p}");
            union.push(p);
        }
    }
    union.sort();
    union.dedup();
    assert_eq!(union, paths(&all));
}

#[test]
fn shipped_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example-config.json");
    let cfg = dissonance::experiment::ExperimentConfig::load(&path).unwrap();
    assert_eq!((cfg.n, cfg.m, cfg.datasets.len()), (10, 5, 3));
}
