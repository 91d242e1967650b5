use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EPS: &str = "2.2737367544323206e-13";

fn nodal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodal"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("spawn nodal")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_are_ordered_idempotent_and_stale_aware() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = nodal(d, &["verify"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(code(&nodal(d, &["trace"])), 3);

    assert_eq!(code(&nodal(d, &["construct", "--epsilon", EPS])), 0);
    let o = nodal(d, &["verify"]);
    assert_eq!(code(&o), 3, "verify before build: {}", stderr(&o));
    assert_eq!(code(&nodal(d, &["trace"])), 0);
    assert_eq!(code(&nodal(d, &["build"])), 0);
    assert_eq!(code(&nodal(d, &["render"])), 3, "render needs a report");

    let names = [
        "manifest.json",
        "mu.csv",
        "interior.csv",
        "trace.json",
        "h.csv",
        "u_grid.csv",
        "build.json",
    ];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(d.join(n)).unwrap()).collect();
    assert_eq!(code(&nodal(d, &["construct", "--epsilon", EPS])), 0);
    assert_eq!(code(&nodal(d, &["trace"])), 0);
    assert_eq!(code(&nodal(d, &["build"])), 0);
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(&fs::read(d.join(n)).unwrap(), bytes, "{n} changed on rerun");
    }

    let manifest: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(manifest["coefficients"].as_array().unwrap().len(), 5);

    // a new manifest invalidates the downstream artifacts
    let mut text = String::from_utf8(first[0].clone()).unwrap();
    text.push('\n');
    fs::write(d.join("manifest.json"), text).unwrap();
    let o = nodal(d, &["build"]);
    assert_eq!(code(&o), 3, "stale trace: {}", stderr(&o));
}

#[test]
fn failing_fixed_epsilon_is_a_construction_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nodal(dir.path(), &["construct", "--epsilon", "1e-3"]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("saddle_z0") && e.contains("global"), "{e}");
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn usage_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&nodal(d, &["construct", "--start-k", "7"])), 3);
    assert_eq!(code(&nodal(d, &["frobnicate"])), 3);
    assert_eq!(code(&nodal(d, &["trace", "--epsilon", EPS])), 3);

    let cfg = d.join("bad.json");
    fs::write(&cfg, r#"{"grid": 12}"#).unwrap();
    assert_eq!(code(&nodal(d, &["construct", "--config", cfg.to_str().unwrap()])), 3);
    fs::write(&cfg, r#"{"gird": 1001}"#).unwrap();
    assert_eq!(code(&nodal(d, &["construct", "--config", cfg.to_str().unwrap()])), 3);
}
