use std::path::Path;
use std::process::{Command, Output};

fn gso(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gso")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = gso(dir, args);
    assert!(out.status.success(), "gso {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    gso(dir, args).status.code().unwrap()
}

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--seed", "1"]);
    ok(d, &["train", "--data-dir", "data", "--out", "model.gso", "--epochs", "10"]);
    dir
}

#[test]
fn staged_commands_produce_artifacts_with_meta() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["fit-subspace", "--model", "model.gso", "--train", "data/train.gso", "--k", "6", "--out", "sub.gso"]);
    ok(d, &["spectrum", "--subspace", "sub.gso", "--out", "spectrum.csv"]);
    ok(d, &["embed", "--model", "model.gso", "--subspace", "sub.gso", "--data", "data/train.gso", "--out", "emb-train.gso"]);
    ok(d, &["embed", "--model", "model.gso", "--subspace", "sub.gso", "--data", "data/ood-far.gso", "--out", "emb-far.gso"]);
    for det in ["knn", "maha", "energy"] {
        let file = format!("det-{det}.gso");
        let scores = format!("scores-{det}.gso");
        ok(d, &["fit-detector", "--embeddings", "emb-train.gso", "--detector", det, "--clip-dims", "3", "--out", &file]);
        ok(d, &["score", "--embeddings", "emb-far.gso", "--detector-file", &file, "--out", &scores]);
        let meta = std::fs::read_to_string(d.join(format!("{file}.meta"))).unwrap();
        assert!(meta.contains(det), "{meta}");
        let s = gradood::format::load_dataset(&d.join(&scores)).unwrap();
        assert_eq!((s.len(), s.dim()), (500, 1));
    }
    for f in ["model.gso", "sub.gso", "spectrum.csv", "emb-train.gso", "data/train.gso"] {
        assert!(d.join(format!("{f}.meta")).exists(), "{f} has no meta sidecar");
    }
    let csv = std::fs::read_to_string(d.join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = prepared();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "k = 5\ndetectors = [\"knn\"]\nhistogram-bins = 7\n").unwrap();
    ok(d, &["eval", "--config", "run.toml", "--model", "model.gso", "--data-dir", "data", "--k", "3", "--out", "r"]);
    let report = gradood::evalharness::EvalReport::load(&d.join("r/report.json")).unwrap();
    assert_eq!(report.config["k"], 3);
    assert_eq!(report.config["histogram-bins"], 7);
    assert_eq!(report.subspace.k, 3);
    assert!(report.streams.iter().all(|s| s.detector == gradood::detectors::DetectorKind::Knn));
    let hist = std::fs::read_to_string(d.join("r/histograms/gradient-knn-far.csv")).unwrap();
    assert_eq!(hist.lines().count(), 8);
}

#[test]
fn exit_codes() {
    let dir = prepared();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["train", "--no-such-flag"]), 1);
    // required input not given: usage; given but unreadable: data
    assert_eq!(code(d, &["train", "--out", "m.gso"]), 1);
    assert_eq!(code(d, &["train", "--data-dir", "missing", "--out", "m.gso"]), 2);
    assert_eq!(code(d, &["eval", "--model", "model.gso", "--data-dir", "data", "--detectors", "nope"]), 1);
    std::fs::write(d.join("bad.toml"), "unknown-key = 1\n").unwrap();
    assert_eq!(code(d, &["eval", "--config", "bad.toml", "--model", "model.gso", "--data-dir", "data"]), 1);

    // corrupt a payload byte: CRC mismatch
    let mut bytes = std::fs::read(d.join("model.gso")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(d.join("model.gso"), bytes).unwrap();
    let out = gso(d, &["eval", "--model", "model.gso", "--data-dir", "data", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.gso"));
}

#[test]
fn json_logs_are_one_object_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = gso(dir.path(), &["--json-logs", "synth", "--out", "data"]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(!stderr.is_empty());
    for line in stderr.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("level").is_some() && v.get("message").is_some(), "{line}");
    }
}
