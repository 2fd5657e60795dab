use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn spice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spice"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SPICE_THREADS")
        .output()
        .unwrap()
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/calibrate.toml")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn calibrate(out: &Path, threads: &str) -> Output {
    spice(&["calibrate", "--config", path(&toy_config()), "--out", path(out), "--threads", threads])
}

#[test]
fn missing_config_exits_with_validation_code() {
    let out = spice(&["calibrate", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
}

#[test]
fn toy_calibration_writes_outputs_and_diagnoses_exactly() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    let out = calibrate(&run, "4");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().any(|l| l.starts_with("progress chain=")));
    for f in ["manifest.toml", "summary.csv", "fit.txt", "ppc.csv", "ids.csv", "timing.txt", "draws_chain0.csv", "draws_chain1.csv"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }

    let out = spice(&["diagnose", "--run", path(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(run.join("summary.csv")).unwrap();
    let b = std::fs::read(run.join("diagnose/summary.csv")).unwrap();
    assert_eq!(a, b);

    // same seed, one worker: identical draws
    let single = dir.path().join("single");
    assert_eq!(calibrate(&single, "1").status.code(), Some(0));
    for f in ["draws_chain0.csv", "draws_chain1.csv", "summary.csv", "ppc.csv", "fit.txt"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(single.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let config = toy_config();
    let base = ["calibrate", "--config", path(&config), "--chains", "1"];
    assert!(spice(&[&base[..], &["--out", path(&a), "--seed", "3"]].concat()).status.success());
    assert!(spice(&[&base[..], &["--out", path(&b), "--seed", "4"]].concat()).status.success());
    let read = |d: &Path| std::fs::read(d.join("draws_chain0.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert!(!b.join("draws_chain1.csv").exists());
    let manifest = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
}

#[test]
fn unwritable_output_directory_fails_fast() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = calibrate(&blocker.join("run"), "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).contains("progress"));
}

#[test]
fn simulate_then_calibrate() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        r#"
seed = 4
responses_per_person = 5

[[person_blocks]]
id = 0
count = 60
b = [[0.0]]
s = [1.0]
fixed = true

[[item_blocks]]
id = 1
count = 15
family = "2PL"
features = 1
"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    let out = spice(&["simulate", "--spec", path(&spec), "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let responses = std::fs::read_to_string(data.join("responses.csv")).unwrap();
    assert_eq!(responses.lines().count(), 1 + 60 * 5);
    assert!(data.join("truth.csv").is_file());

    let config = data.join("calibrate.toml");
    let text = std::fs::read_to_string(&config).unwrap();
    let text = text
        .replace("m1 = 200", "m1 = 20")
        .replace("m2 = 500", "m2 = 20")
        .replace("m3 = 500", "m3 = 20")
        .replace("m4 = 2000", "m4 = 40");
    std::fs::write(&config, text).unwrap();
    let out = spice(&["calibrate", "--config", path(&config)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("output/summary.csv").is_file());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nresponses_per_person = 0\n").unwrap();
    assert_eq!(spice(&["simulate", "--spec", path(&bad), "--out", path(&data)]).status.code(), Some(2));
}
