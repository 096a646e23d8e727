use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

fn wflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wflow"))
        .args(args)
        .env("WFLOW_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wflow(args);
    assert!(
        out.status.success(),
        "wflow {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn key_values(stdout: &str) -> HashMap<String, String> {
    stdout
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn number(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key)
        .unwrap_or_else(|| panic!("missing key {key}"))
        .parse()
        .unwrap()
}

fn last_csv_row(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .next_back()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fig1a_goes_negative() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let kv = key_values(&ok(&["run", "fig1a", "--out", path_str(&out)]));
    assert!(number(&kv, "min_value") < 0.0);
    assert!((number(&kv, "normalization") - 1.0).abs() < 1e-6);
    for f in [
        "scenario.txt",
        "diagnostics.txt",
        "diagnostics.json",
        "steps.csv",
        "times.csv",
        "final.ppm",
        "contours.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn fig1b_disagrees_with_oracle_in_sign() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let kv = key_values(&ok(&["run", "fig1b", "--compare", "oracle", "--out", path_str(&out)]));
    assert!(number(&kv, "sign_disagreement_area") > 0.0);
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(table.starts_with("step,time,l2,linf,sign_disagreement_area"));
    assert!(last_csv_row(&table)[4] > 0.0);
}

#[test]
fn friction_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let kv = key_values(&ok(&[
        "run",
        "friction",
        "--gamma",
        "0.3",
        "--t",
        "1",
        "--grid",
        "128",
        "--compare",
        "analytic",
        "--out",
        path_str(&out),
    ]));
    assert!(number(&kv, "error_linf") < 1e-3);
}

#[test]
fn comparing_identical_runs_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["run", "fig1c", "--grid", "128", "--out", path_str(&a)]);
    ok(&["run", "fig1c", "--grid", "128", "--out", path_str(&b)]);
    let table = ok(&["compare", path_str(&a), path_str(&b)]);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&cols[2..], &[0.0, 0.0, 0.0]);
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["run", "fig1a", "--grid", "128", "--out", path_str(&a)]);
    // a different thread count must not change any byte
    let out = Command::new(env!("CARGO_BIN_EXE_wflow"))
        .args(["run", "fig1a", "--grid", "128", "--out", path_str(&b)])
        .env("WFLOW_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["final.csv", "steps.csv", "contours.csv", "diagnostics.txt"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn diagnose_and_export_read_run_fields() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("r");
    ok(&["run", "fig1a", "--grid", "128", "--out", path_str(&run_dir)]);
    let final_csv = run_dir.join("final.csv");
    let kv = key_values(&ok(&["diagnose", path_str(&final_csv)]));
    assert!(number(&kv, "min_value") < 0.0);
    assert!(number(&kv, "singular_fraction") >= 0.0);
    let json = ok(&[
        "diagnose",
        path_str(&final_csv),
        "--json",
        "--reference",
        path_str(&final_csv),
    ]);
    assert!(json.contains("\"error_linf\": 0.0") || json.contains("\"error_linf\":0.0"));

    let ppm = dir.path().join("w.ppm");
    ok(&[
        "export",
        path_str(&final_csv),
        "--out",
        path_str(&ppm),
        "--palette",
        "bkr",
    ]);
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6\n128 128\n255\n"));
    let wfld = dir.path().join("w.wfld");
    ok(&["export", path_str(&final_csv), "--out", path_str(&wfld)]);
    let back = dir.path().join("back.csv");
    ok(&["export", path_str(&wfld), "--out", path_str(&back)]);
    let kv_back = key_values(&ok(&["diagnose", path_str(&back)]));
    assert_eq!(kv_back["normalization"], kv["normalization"]);
}

#[test]
fn invalid_configurations_fail() {
    for args in [
        vec!["run", "fig9"],
        vec!["run", "fig1a", "--dt", "-1"],
        vec!["run", "fig1a", "--grid", "63"],
        vec!["run", "fig1a", "--method", "leapfrog"],
        vec!["run", "fig1a", "--scheme", "spectral:-3"],
        vec!["run", "friction", "--evolver", "lagrangian"],
        vec!["run", "fig1a", "--t", "0.015"],
        vec!["export", "/nonexistent/field.csv", "--out", "x.ppm"],
    ] {
        let out = wflow(&args);
        assert!(!out.status.success(), "wflow {args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}
