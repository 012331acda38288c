use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_expeuler"));
    c.env_remove("EXPEULER_SEED");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let o = bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn report(out: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{name}.json"))).unwrap()).unwrap()
}

const SMALL_STRONG: &str = r#"{
  "experiment": "strong-order",
  "problem": { "k": 8, "x0": { "kind": "modes", "coeffs": [1.0, 0.2] } },
  "noise": { "kind": "exponential", "rate": 0.1, "k_noise": 8, "seed": 5 },
  "run": { "m_list": [4, 8, 16], "m_ref": 64, "samples": 24 }
}"#;

#[test]
fn check_conditions_reports_full_gamma_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{ "experiment": "check-conditions", "noise": { "kind": "exponential", "rate": 0.1, "k_noise": 64 } }"#,
    );
    let (code, _, err) = run(&cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path(), "check-conditions");
    assert_eq!(r["metrics"]["gamma_range"], serde_json::json!([0.0, 1.0]));
    assert_eq!(r["verdict"], "PASS");
}

#[test]
fn strong_order_with_single_level_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{ "experiment": "strong-order", "run": { "m_list": [64], "m_ref": 64, "samples": 8 } }"#,
    );
    let (code, _, err) = run(&cfg, dir.path(), &[]);
    assert_eq!(code, 3);
    assert!(err.contains("at least 3 m-values"), "{err}");
    assert!(!dir.path().join("strong-order.csv").exists());
}

#[test]
fn galerkin_decay_table_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{ "experiment": "galerkin-decay", "run": { "gamma": [1.0], "n_list": [16, 64, 256, 1024] } }"#,
    );
    let (code, _, err) = run(&cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("galerkin-decay.csv")).unwrap();
    let scaled: Vec<f64> = csv
        .lines()
        .skip(3)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scaled.len(), 4);
    assert!(scaled.windows(2).all(|w| w[1] < w[0]), "{scaled:?}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{ "experiment": "strong-order", "run": { "m_lst": [1] } }"#);
    assert_eq!(run(&cfg, dir.path(), &[]).0, 2);
    let cfg = write_config(dir.path(), "bad2.json", "not json");
    assert_eq!(run(&cfg, dir.path(), &[]).0, 2);
    assert_eq!(run(&dir.path().join("missing.json"), dir.path(), &[]).0, 2);
}

#[test]
fn too_many_auxiliary_processes_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.json",
        r#"{
  "experiment": "she-limit-point",
  "problem": { "k": 8 },
  "noise": { "kind": "exponential", "rate": 0.1, "k_noise": 8 },
  "run": { "m": 4, "m_ref": 16, "m_sim": 16, "l_aux": 9, "samples": 4 }
}"#,
    );
    let o = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L = 9"));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{
  "experiment": "strong-order",
  "problem": { "k": 4, "drift": { "name": "linear", "c": 1e200 } },
  "noise": { "kind": "exponential", "rate": 0.1, "k_noise": 4 },
  "run": { "m_list": [2, 4, 8], "m_ref": 16, "samples": 4 }
}"#,
    );
    let (code, _, err) = run(&cfg, dir.path(), &[]);
    assert_eq!(code, 4, "{err}");
}

#[test]
fn csv_is_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL_STRONG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (ca, _, ea) = run(&cfg, &a, &["--workers", "1"]);
    let (cb, _, _) = run(&cfg, &b, &["--workers", "3"]);
    assert!(ca <= 1 && ca == cb, "{ea}");
    let strip = |p: PathBuf| {
        let s = fs::read_to_string(p).unwrap();
        assert!(s.starts_with("# generated "));
        s.split_once('\n').unwrap().1.to_string()
    };
    assert_eq!(strip(a.join("strong-order.csv")), strip(b.join("strong-order.csv")));
}

#[test]
fn seed_flag_beats_environment_beats_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL_STRONG);
    let out = dir.path().join("o");
    let seed_of = |cmd: &mut Command| {
        cmd.output().unwrap();
        report(&out, "strong-order")["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(bin().arg("run").arg(&cfg).arg("--out").arg(&out)), 5);
    assert_eq!(
        seed_of(bin().env("EXPEULER_SEED", "11").arg("run").arg(&cfg).arg("--out").arg(&out)),
        11
    );
    assert_eq!(
        seed_of(
            bin()
                .env("EXPEULER_SEED", "11")
                .args(["run", "--seed", "13"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
        ),
        13
    );
}

#[test]
fn report_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL_STRONG);
    run(&cfg, dir.path(), &[]);
    let r = report(dir.path(), "strong-order");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r["streams"]["first"], 0);
    assert_eq!(r["streams"]["count"], 24);
    assert!(r["checks"][0]["name"] == "slope");
    assert!(r["metrics"]["slope"].is_number());
}

#[test]
fn sode_limit_writes_sample_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{ "experiment": "sode-limit", "run": { "m": 64, "m_sim": 128, "samples": 200 } }"#,
    );
    let (code, _, err) = run(&cfg, dir.path(), &[]);
    assert!(code <= 1, "{err}");
    let errs = expeuler::SampleSet::read(&dir.path().join("sode-limit-errors.txt"), "e").unwrap();
    assert_eq!(errs.len(), 200);
    assert!(dir.path().join("sode-limit-limit.txt").exists());
}

#[test]
fn catalog_lists_builtin_coefficients() {
    let o = bin().arg("catalog").output().unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    for n in ["zero", "sin", "rational", "constant", "affine", "tanh"] {
        assert!(names.contains(&n), "{names:?}");
    }
}
