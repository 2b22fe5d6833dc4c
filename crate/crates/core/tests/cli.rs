//! Golden-file tests for every subcommand. Set `SIFBM_BLESS=1` to rewrite the
//! expected outputs after an intentional format change.

use std::fs;
use std::path::{Path, PathBuf};

use sifbm::cli::run_with;
use sifbm::set_families::SetFamily;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["sifbm"];
    full.extend_from_slice(args);
    let code = run_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn golden_dir(case: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cli").join(case)
}

/// Runs `args` into a fresh directory and compares `files` with the golden copies.
fn check_golden(case: &str, args: &[&str], files: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let mut full = vec!["--out-dir", out_dir];
    full.extend_from_slice(args);
    let (code, _, err) = run(&full);
    assert_eq!(code, 0, "{case}: {err}");
    let golden = golden_dir(case);
    let bless = std::env::var_os("SIFBM_BLESS").is_some();
    for f in files {
        let produced = fs::read_to_string(dir.path().join(f)).unwrap();
        let expected_path = golden.join(f);
        if bless {
            fs::create_dir_all(&golden).unwrap();
            fs::write(&expected_path, &produced).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&expected_path)
            .unwrap_or_else(|e| panic!("{}: {e}", expected_path.display()));
        assert!(produced == expected, "{case}/{f} differs from golden output");
    }
}

#[test]
fn gram_golden() {
    check_golden(
        "gram",
        &["gram", "--family", "tests/golden/family_2d.json", "--hurst", "0.4"],
        &["gram.csv", "gram_report.json"],
    );
}

#[test]
fn gram_1d_white_noise_is_min() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "gram",
        "--family",
        "tests/golden/family_1d.json",
        "--hurst",
        "0.5",
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("gram.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("label"))
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let pts = [0.25, 0.5, 1.0];
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(rows[i][j], f64::min(pts[i], pts[j]));
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gram_report.json")).unwrap()).unwrap();
    assert_eq!(report["psd"]["psd"], true);
    assert_eq!(report["run"]["command"], "gram");
}

#[test]
fn sample_golden() {
    check_golden(
        "sample",
        &[
            "--seed",
            "7",
            "sample",
            "--family",
            "tests/golden/family_2d.json",
            "--hurst",
            "0.3",
            "--replicates",
            "16",
        ],
        &["samples.csv", "samples.json"],
    );
}

#[test]
fn psd_probe_golden_and_witness() {
    check_golden(
        "psd_probe",
        &["--seed", "1", "psd-probe", "--hurst", "0.9", "--dim", "2"],
        &["psd_probe.json"],
    );
    let produced: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(golden_dir("psd_probe").join("psd_probe.json")).unwrap()).unwrap();
    let persisted = SetFamily::from_json(&fs::read_to_string("tests/golden/witness_h0.9_dim2.json").unwrap()).unwrap();
    let found = SetFamily::from_json(&produced["family"].to_string()).unwrap();
    assert_eq!(found, persisted);
}

#[test]
fn flow_golden() {
    check_golden(
        "flow",
        &[
            "--seed",
            "5",
            "flow",
            "--flow",
            "tests/golden/flow_knee.json",
            "--hurst",
            "0.3",
            "--grid",
            "9",
            "--replicates",
            "3",
        ],
        &["flow.csv", "flow_report.json"],
    );
}

#[test]
fn flow_linear_theta_column() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "flow",
        "--linear",
        "1,2",
        "--hurst",
        "0.4",
        "--grid",
        "17",
        "--replicates",
        "1",
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let mut n = 0;
    for line in csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with('t')) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[1] - 2.0 * f[0] * f[0]).abs() < 1e-15);
        n += 1;
    }
    assert_eq!(n, 17);
}

#[test]
fn holder_golden() {
    check_golden(
        "holder",
        &[
            "--seed",
            "2",
            "holder",
            "--linear",
            "1,1",
            "--hurst",
            "0.3",
            "--grid",
            "256",
            "--replicates",
            "4",
        ],
        &["holder.json"],
    );
}

#[test]
fn holder_reads_flow_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, _, err) = run(&["--out-dir", d, "flow", "--linear", "1,1", "--hurst", "0.5", "--grid", "300", "--invert"]);
    assert_eq!(code, 0, "{err}");
    let csv = dir.path().join("flow.csv");
    let (code, out, err) = run(&["--out-dir", d, "holder", "--input", csv.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("over 4 paths"), "{out}");
}

#[test]
fn suite_golden() {
    check_golden("suite", &["suite", "--config", "tests/golden/suite_small.json"], &["suite_report.json"]);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, _, err) = run(&["--out-dir", d, "gram", "--family", bad.to_str().unwrap(), "--hurst", "0.4"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"), "{err}");

    let empty = dir.path().join("empty.json");
    fs::write(&empty, "{}").unwrap();
    let (code, _, err) = run(&["--out-dir", d, "suite", "--config", empty.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");

    let (code, _, _) = run(&["gram", "--hurst"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["--out-dir", d, "gram", "--family", "tests/golden/family_2d.json", "--hurst", "1.5"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["--out-dir", d, "flow", "--hurst", "0.3"]);
    assert_eq!(code, 2);
}
