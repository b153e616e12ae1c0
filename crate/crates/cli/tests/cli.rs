use std::fs;
use std::path::Path;
use std::process::Command;

use schauder_cli::{execute, generate_instance, ConfigFile, ExperimentConfig};
use schauder_core::{Cube, GridSpec};

fn schauder(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_schauder"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::resolve(toml::from_str::<ConfigFile>(text).unwrap()).unwrap()
}

fn without_stamp(csv: &str) -> &str {
    assert!(csv.starts_with("# "));
    &csv[csv.find('\n').unwrap() + 1..]
}

#[test]
fn solve_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = schauder(&["solve", "--m", "33", "--instances", "3", "--out", out.to_str().unwrap(), "--assert"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "rows.csv", "solve_headline.dat"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["experiment"], "solve");
    assert!(report["aggregate"]["max"].as_f64().unwrap() <= 1e-10);
    for row in report["rows"].as_array().unwrap() {
        for m in row["metrics"].as_array().unwrap() {
            assert!(!m["provenance"].as_str().unwrap().is_empty());
        }
    }
    let dat = fs::read_to_string(out.join("solve_headline.dat")).unwrap();
    assert!(dat.lines().all(|l| l.split_whitespace().count() == 2));
}

#[test]
fn invalid_config_lists_all_errors_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "alpha = 0.5\np = 0.7\neps = 1.5\nlambda = 9.0\n").unwrap();
    let out = dir.path().join("never");
    let o = schauder(&["norms", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.matches("config error").count(), 3, "{err}");
    // Nothing is computed or written.
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "instances = 1\nsede = 4\n").unwrap();
    let o = schauder(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "instances = 5\nm = 65\nseed = 1\n").unwrap();
    let out = dir.path().join("o");
    let o = schauder(&[
        "solve", "--config", cfg.to_str().unwrap(), "--m", "17", "--instances", "2", "--seed", "9",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["config"]["m"], 17);
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn assert_flag_reports_a_breach_with_exit_3() {
    // The Hölder recursion on a large cube does not contract.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.toml");
    fs::write(&cfg, "variant = \"holder\"\nside = 2.0\ndepth = 2\nm = 81\ninstances = 1\n").unwrap();
    let out = dir.path().join("o");
    let args = ["iterate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(schauder(&args).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--assert");
    assert_eq!(schauder(&strict).status.code(), Some(3));
    let trace = fs::read_to_string(out.join("iterate_trace_000.csv")).unwrap();
    assert!(trace.starts_with("level,term_sum,remainder\n"));
    assert_eq!(trace.lines().count(), 3);
    assert!(out.join("iterate_trace_000.json").is_file());
}

#[test]
fn reruns_give_identical_csv() {
    let cfg = config("experiment = \"rhi\"\nm = 33\ninstances = 3\ncoefficient_class = \"checkerboard\"");
    let a = execute(&cfg).csv();
    let b = execute(&cfg).csv();
    assert_eq!(without_stamp(&a), without_stamp(&b));
}

#[test]
fn rhi_ratio_columns_are_monotone() {
    let cfg = config("experiment = \"rhi\"\nm = 33\ninstances = 4\ncoefficient_class = \"checkerboard\"");
    let r = execute(&cfg);
    for row in &r.rows {
        assert!(row.error.is_none() && row.breach.is_none(), "{row:?}");
        let v: Vec<f64> = row.metrics.iter().map(|m| m.value).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn sparse_rows_verify() {
    let cfg = config("experiment = \"sparse-bound\"\nm = 49\ninstances = 2\neps = 0.5");
    let r = execute(&cfg);
    for row in &r.rows {
        assert!(row.error.is_none(), "{row:?}");
        let valid = row.metrics.iter().find(|m| m.name == "valid").unwrap();
        assert_eq!(valid.value, 1.0);
    }
}

#[test]
fn instances_are_reproducible() {
    let cfg = config("coefficient_class = \"uniform-continuous\"");
    let spec = GridSpec::new(Cube::unit(2).unwrap(), 9).unwrap();
    let a = generate_instance(&cfg, 3).unwrap().fingerprint(&spec).unwrap();
    let b = generate_instance(&cfg, 3).unwrap().fingerprint(&spec).unwrap();
    let c = generate_instance(&cfg, 4).unwrap().fingerprint(&spec).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = schauder(&["solve", "--m", "9", "--instances", "1", "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(Path::new(&blocker).is_file());
}
