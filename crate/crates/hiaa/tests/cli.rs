use std::path::Path;
use std::process::{Command, Output};

use hiaa::report::EvalBundle;
use hiaa_core::metrics::HeadKind;

fn hiaa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiaa")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = hiaa(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

/// Last stderr line, which carries the error category.
fn error_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or_default().to_string()
}

const PIPELINE: [&str; 7] = ["synth", "ingest", "genqa", "split", "train", "train-voter", "eval"];

fn run_pipeline(dir: &Path, n: &str) {
    for cmd in PIPELINE {
        let args: Vec<&str> =
            if cmd == "synth" { vec!["--seed", "3", cmd, "--n", n] } else { vec!["--seed", "3", cmd] };
        ok(dir, &args);
    }
}

#[test]
fn full_pipeline_reports_every_head() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path(), "400");
    let bundle: EvalBundle =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let heads: Vec<HeadKind> = bundle.reports.iter().map(|r| r.head).collect();
    assert_eq!(heads, HeadKind::ALL.to_vec());
    for r in &bundle.reports {
        assert_eq!(r.provenance["seed"], "3");
        assert!(r.overall().n > 0);
    }
    assert_eq!(bundle.reports[0].rows.len(), 13);
    assert_eq!(bundle.reports[1].rows.len(), 1);

    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let printed = hiaa(dir.path(), &["report"]);
    assert!(printed.status.success());
    assert_eq!(String::from_utf8(printed.stdout).unwrap(), text);

    ok(dir.path(), &["score", "--fused", "--subset", "test"]);
    let scores = std::fs::read_to_string(dir.path().join("scores.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(scores.lines().next().unwrap()).unwrap();
    assert!(first["fused"].is_f64());
    assert_eq!(scores.lines().count(), bundle.reports[0].n);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path(), "300");
    run_pipeline(b.path(), "300");
    for f in [
        "records.jsonl",
        "samples.jsonl",
        "qa.jsonl",
        "split.json",
        "stage1.json",
        "model.json",
        "report.json",
        "report.txt",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    // eval alone, rerun in place
    let before = std::fs::read(a.path().join("report.json")).unwrap();
    ok(a.path(), &["--seed", "3", "eval"]);
    assert_eq!(before, std::fs::read(a.path().join("report.json")).unwrap());
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path(), "200");
    let stage1 = std::fs::read(dir.path().join("stage1.json")).unwrap();
    let samples = std::fs::read(dir.path().join("samples.jsonl")).unwrap();
    ok(dir.path(), &["--seed", "3", "train-voter"]);
    ok(dir.path(), &["--seed", "3", "eval"]);
    assert_eq!(stage1, std::fs::read(dir.path().join("stage1.json")).unwrap());
    assert_eq!(samples, std::fs::read(dir.path().join("samples.jsonl")).unwrap());
}

#[test]
fn fused_scoring_needs_a_trained_voter() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["synth", "ingest", "split", "train"] {
        ok(dir.path(), &[cmd, "--n", "150"][..if cmd == "synth" { 3 } else { 1 }]);
    }
    let o = hiaa(dir.path(), &["--set", "paths.checkpoint=stage1.json", "score", "--fused"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o).starts_with("error[missing_input]:"), "{}", error_line(&o));
    assert!(!dir.path().join("scores.jsonl").exists());

    // unfused scoring of the same checkpoint is fine
    ok(dir.path(), &["--set", "paths.checkpoint=stage1.json", "score"]);
    let o = hiaa(dir.path(), &["--set", "paths.checkpoint=stage1.json", "eval"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exit_codes_follow_the_error_category() {
    let dir = tempfile::tempdir().unwrap();
    // missing input
    let o = hiaa(dir.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(3), "{}", error_line(&o));
    assert!(error_line(&o).starts_with("error[missing_input]:"));
    assert_eq!(error_line(&o).lines().count(), 1);

    // configuration errors
    for args in [
        &["--set", "stage1.epochs=0", "train"][..],
        &["--set", "stage1.no_such_key=1", "ingest"],
        &["split", "--test-fraction", "1.5"],
        &["train", "--optimizer", "lbfgs"],
    ] {
        let o = hiaa(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", error_line(&o));
        assert!(error_line(&o).starts_with("error[config]:"), "{}", error_line(&o));
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = \"not a number\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hiaa")).arg("--config").arg(&cfg).arg("synth").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // format errors: corrupt records, then a future checkpoint version
    std::fs::write(dir.path().join("records.jsonl"), "{\"sample_id\": 1}\n").unwrap();
    let o = hiaa(dir.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(4), "{}", error_line(&o));
    assert!(error_line(&o).starts_with("error[corrupt_file]:"));

    ok(dir.path(), &["synth", "--n", "120"]);
    ok(dir.path(), &["ingest"]);
    ok(dir.path(), &["split"]);
    ok(dir.path(), &["train"]);
    let p = dir.path().join("stage1.json");
    let text = std::fs::read_to_string(&p).unwrap().replacen("\"format_version\": 1", "\"format_version\": 7", 1);
    std::fs::write(&p, text).unwrap();
    let o = hiaa(dir.path(), &["train-voter"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(error_line(&o).starts_with("error[version_mismatch]:"));
}

#[test]
fn numeric_failure_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--n", "120"]);
    ok(dir.path(), &["ingest"]);
    ok(dir.path(), &["split"]);
    let o = hiaa(dir.path(), &["train", "--optimizer", "sgd", "--learning-rate", "1e200"]);
    assert_eq!(o.status.code(), Some(5), "{}", error_line(&o));
    assert!(error_line(&o).starts_with("error[numeric]:"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[synth]\nn = 50\noverall_fraction = 0.0\n").unwrap();
    let run = |extra: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_hiaa"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .args(extra)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap()
    };
    assert_eq!(run(&["synth"]).lines().count(), 50);
    assert_eq!(run(&["synth", "--n", "20"]).lines().count(), 20);
    let a = run(&["synth"]);
    let b = run(&["--seed", "6", "synth"]);
    assert_ne!(a, b);
    assert!(a.lines().all(|l| l.contains("\"manual\"")));
}
