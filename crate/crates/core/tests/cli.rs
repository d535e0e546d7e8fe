use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stereo6d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereo6d"))
        .args(args)
        .env("STEREO6D_WORKERS", "2")
        .output()
        .expect("spawn stereo6d")
}

fn ok(args: &[&str]) -> Output {
    let out = stereo6d(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(root: &Path, seed: &str) {
    ok(&["generate", "--out", s(root), "--seed", seed, "--scenes", "1", "--views", "2"]);
}

#[test]
fn generate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(a.path(), "7");
    generate(b.path(), "7");
    let gt = |d: &Path| fs::read(d.join("000000/scene_gt.json")).unwrap();
    assert_eq!(gt(a.path()), gt(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate(c.path(), "8");
    assert_ne!(gt(a.path()), gt(c.path()));
}

#[test]
fn evaluate_reports_one_column_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("est.json");
    let eval = dir.path().join("eval");
    generate(&data, "3");
    ok(&["estimate", "--dataset", s(&data), "--out", s(&est), "--strategy", "MONO_LEFT,MID_JOINT_PNP", "--noise-px", "2"]);
    ok(&["evaluate", "--dataset", s(&data), "--estimates", s(&est), "--out", s(&eval)]);
    let csv = fs::read_to_string(eval.join("report.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "obj_id,symmetric,MONO_LEFT,MID_JOINT_PNP");
    assert!(csv.lines().any(|l| l.starts_with("mean,")));
    assert!(fs::read_to_string(eval.join("report.txt")).unwrap().contains("MID_JOINT_PNP"));
    assert!(!eval.join(".incomplete").exists());

    let report = dir.path().join("report");
    ok(&["report", "--inputs", s(&eval.join("evaluation.json")), "--out", s(&report)]);
    let svgs = fs::read_dir(&report).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    assert_eq!(svgs, 3);
}

#[test]
fn mismatched_ids_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("est.json");
    generate(&data, "4");
    ok(&["estimate", "--dataset", s(&data), "--out", s(&est), "--strategy", "MONO_LEFT"]);
    let text = fs::read_to_string(&est).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["records"][0]["scene_id"] = 99.into();
    fs::write(&est, serde_json::to_string(&json).unwrap()).unwrap();
    let out = stereo6d(&["evaluate", "--dataset", s(&data), "--estimates", s(&est), "--out", s(&dir.path().join("eval"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("evaluate") && err.contains("scene 99"), "{err}");
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(stereo6d(&["estimate", "--dataset", "x", "--out", "y", "--strategy", "NOPE"]).status.code(), Some(1));
    assert_eq!(stereo6d(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(stereo6d(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[generate]\nscenes = 1\nbogus = 2\n").unwrap();
    let out = stereo6d(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = stereo6d(&["estimate", "--dataset", s(&dir.path().join("nowhere")), "--out", s(&dir.path().join("e.json"))]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
