use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn frontier(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontier"))
        .args(args)
        .current_dir(dir)
        .env_remove("FRONTIER_OUT_DIR")
        .output()
        .unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let mut args = vec!["synth", "--out-dir", "data"];
    args.extend(extra);
    if !extra.contains(&"--n-banks") {
        args.extend(["--n-banks", "12", "--n-years", "4"]);
    }
    let out = frontier(&args, dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("data/synth_panel.csv")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(frontier(&["dea", "--model", "nope"], tmp.path()).status.code(), Some(2));
    assert_eq!(frontier(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(frontier(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_one_and_name_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "bank_id,year\nA,2006\n").unwrap();
    let out = frontier(&["describe", "--input", "bad.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error in step `load bad.csv`"), "{err}");
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn synth_then_dea_writes_scores_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = synth(tmp.path(), &["--seed", "3"]);
    let m = manifest(&tmp.path().join("data"));
    assert_eq!(m["seed"], 3);

    let out = frontier(
        &["dea", "--input", panel.to_str().unwrap(), "--model", "super-sbm-und", "--out-dir", "o"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scores = fs::read_to_string(tmp.path().join("o/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 12 * 4);
    let m = manifest(&tmp.path().join("o"));
    assert_eq!(m["command"], "dea");
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    assert_eq!(outputs[0]["path"], "scores.csv");
    assert_eq!(outputs[0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn json_scores_parse() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = synth(tmp.path(), &[]);
    let out = frontier(
        &["dea", "--input", panel.to_str().unwrap(), "--model", "bcc", "--format", "json"],
        tmp.path(),
    );
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("scores.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 48);
}

#[test]
fn config_file_fills_unset_flags_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = synth(tmp.path(), &[]);
    let config = serde_json::json!({
        "out_dir": "from_config",
        "dea": { "model": "ccr", "format": "json", "input": panel }
    });
    fs::write(tmp.path().join("cfg.json"), config.to_string()).unwrap();

    let out = frontier(&["--config", "cfg.json", "dea"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("from_config"));
    assert_eq!(m["config"]["model"], "ccr");
    assert!(tmp.path().join("from_config/scores.json").exists());

    let out = frontier(&["--config", "cfg.json", "dea", "--format", "csv", "--out-dir", "flag"], tmp.path());
    assert!(out.status.success());
    let m = manifest(&tmp.path().join("flag"));
    assert_eq!(m["config"]["format"], "csv");
    assert_eq!(m["config"]["model"], "ccr");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), r#"{"dea": {"modle": "ccr"}}"#).unwrap();
    let out = frontier(&["--config", "cfg.json", "dea"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step `config`"));
}

#[test]
fn environment_sets_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_frontier"))
        .args(["synth", "--n-banks", "5", "--n-years", "3"])
        .current_dir(tmp.path())
        .env("FRONTIER_OUT_DIR", "env_out")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("env_out/synth_panel.csv").exists());
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    // A regular file where the output directory should be.
    fs::write(tmp.path().join("blocked"), "x").unwrap();
    let out = frontier(&["synth", "--n-banks", "5", "--n-years", "3", "--out-dir", "blocked"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("write outputs"));
    assert_eq!(fs::read_to_string(tmp.path().join("blocked")).unwrap(), "x");
}

#[test]
fn describe_corr_and_sfa_emit_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = synth(tmp.path(), &["--n-banks", "30", "--n-years", "6"]);
    let p = panel.to_str().unwrap();
    for (cmd, file) in [("describe", "describe.md"), ("corr", "corr_table.md"), ("sfa", "sfa_fit.json")] {
        let out = frontier(&[cmd, "--input", p, "--out-dir", cmd], tmp.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(tmp.path().join(cmd).join(file).exists(), "{cmd}");
    }
    let md = fs::read_to_string(tmp.path().join("describe/describe.md")).unwrap();
    assert!(md.starts_with("| Variable | N | Mean | SD | Min | p25 | p75 | Max |"));
    let eff = fs::read_to_string(tmp.path().join("sfa/efficiency.csv")).unwrap();
    assert_eq!(eff.lines().next(), Some("bank_id,year,sfa_eff"));
}

#[test]
fn regress_computes_missing_efficiencies() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = synth(tmp.path(), &["--n-banks", "30", "--n-years", "8", "--first-year", "2010"]);
    let out = frontier(
        &["regress", "--input", panel.to_str().unwrap(), "--spec", "baseline", "--vif-screen"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("regress_baseline.md")).unwrap();
    assert!(table.contains("supereff") && table.contains("sfa_eff"));
    assert!(tmp.path().join("vif.md").exists());
    let m = manifest(tmp.path());
    let warnings = m["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("computed missing efficiency")));
}
