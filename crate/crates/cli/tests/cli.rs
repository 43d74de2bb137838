use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cocompact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocompact")).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    doc["report"].clone()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn norms_of_the_annulus_agree() {
    let out = cocompact(&["norms", "annulus2d"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let a = r["lorentz_rearrangement"].as_f64().unwrap();
    let b = r["lorentz_symmetrization"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-10 * a);
    // ||phi||_2 = sqrt(3 pi)
    assert!((r["lebesgue"].as_f64().unwrap() - (3.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
}

#[test]
fn staircase_inputs_match_closed_forms() {
    for n in [1, 5] {
        let out = cocompact(&["norms", &format!("staircase2d:{n}")]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let r = report(&out);
        let pi = std::f64::consts::PI;
        assert!((r["lebesgue"].as_f64().unwrap() - (3.0 * pi / n as f64).sqrt()).abs() < 1e-12);
        assert!((r["total_variation"].as_f64().unwrap() - (2.0 * pi + 4.0 * pi / n as f64)).abs() < 1e-12);
    }
    let out = cocompact(&["norms", "staircase3d:3", "--q", "inf"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(cocompact(&["norms", "staircase2d:x"]).status.code(), Some(2));
    assert_eq!(cocompact(&["norms", "staircase2d:0"]).status.code(), Some(2));
}

#[test]
fn radial_csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annulus.csv");
    std::fs::write(&path, "r_in,r_out,value\n0,1,0\n1,2,1\n").unwrap();
    let from_csv = report(&cocompact(&["norms", path.to_str().unwrap()]));
    let builtin = report(&cocompact(&["norms", "annulus2d"]));
    assert_eq!(from_csv["lorentz_rearrangement"], builtin["lorentz_rearrangement"]);
}

#[test]
fn norms_of_zero_are_zero() {
    let out = cocompact(&["norms", "zero2d", "--q", "inf"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    for key in ["lorentz_rearrangement", "lorentz_symmetrization", "lebesgue", "total_variation"] {
        assert_eq!(r[key].as_f64(), Some(0.0), "{key}");
    }
}

#[test]
fn bad_indices_exit_with_two() {
    let out = cocompact(&["norms", "--q", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("index error"));
    let out = cocompact(&["counterexample", "--q-list", "1,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("index error"));
    let out = cocompact(&["norms", "nosuchinput"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smallest_counterexample_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = cocompact(&["counterexample", "--n-max", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["table"]["rows"].as_array().unwrap().len(), 1);
    for f in ["counterexample.csv", "vanishing.csv", "counterexample.gp", "counterexample.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("counterexample.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"audit": {"corpus_size": 3, "colour": true}}"#).unwrap();
    let out = cocompact(&["--config", path.to_str().unwrap(), "audit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"));

    std::fs::write(&path, r#"{"schema_version": 7}"#).unwrap();
    let out = cocompact(&["--config", path.to_str().unwrap(), "norms"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"audit": {"corpus_size": 2, "seed": 4}}"#).unwrap();
    let out = cocompact(&["--config", path.to_str().unwrap(), "--seed", "9", "audit", "--suite", "lattice-splitting"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["provenance"]["config"]["audit"]["seed"], 9);
    assert_eq!(doc["provenance"]["config"]["audit"]["corpus_size"], 2);
    assert_eq!(doc["report"]["audit"]["suites"].as_array().unwrap().len(), 1);
}

#[test]
fn empty_corpus_passes_with_a_warning() {
    let out = cocompact(&["audit", "--corpus-size", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = cocompact(&["audit", "--suite", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decompose_rejects_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = cocompact(&["decompose", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn fixture(kind: &str, dir: &Path, extra: &[&str]) {
    let mut args = vec!["--out", dir.to_str().unwrap(), "fixture", kind];
    args.extend_from_slice(extra);
    let out = cocompact(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn static_bump_gives_one_profile() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    fixture("static-bump", &seq, &["--level", "4", "--k-max", "4"]);
    let out_dir = dir.path().join("out");
    let out = cocompact(&["--out", out_dir.to_str().unwrap(), "decompose", seq.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["profiles"], 1);
    assert!(out_dir.join("decomposition.json").is_file());
    assert!(out_dir.join("profile_1_0.grid").is_file());
}

#[test]
fn output_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    fixture("two-profile", &seq, &["--level", "4", "--k-max", "5"]);
    let seq = seq.to_str().unwrap();
    let strip = |b: &[u8]| {
        let mut v: Value = serde_json::from_slice(b).unwrap();
        v["provenance"]["config"]["threads"] = Value::Null;
        v
    };
    let runs: Vec<Value> = ["1", "4", "4"]
        .iter()
        .map(|t| strip(&cocompact(&["--threads", t, "decompose", seq]).stdout))
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));

    let audits: Vec<Value> = ["1", "3"]
        .iter()
        .map(|t| strip(&cocompact(&["--threads", t, "audit", "--corpus-size", "4"]).stdout))
        .collect();
    assert_eq!(audits[0], audits[1]);
    // same thread count: byte-identical
    let a = cocompact(&["audit", "--corpus-size", "4", "--seed", "3"]).stdout;
    let b = cocompact(&["audit", "--corpus-size", "4", "--seed", "3"]).stdout;
    assert_eq!(a, b);
}
