use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64 as C64;
use partial_eit::experiments::{run_reconstruction, ExperimentConfig};
use partial_eit::{BoundaryGrid, BoundaryTrace, GammaArc, NDMatrix};
use serde_json::Value;
use tempfile::TempDir;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partial-eit"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn header(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap().strip_prefix("# ").unwrap()).unwrap()
}

/// Data rows of a CSV output, split into fields.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SMALL: [&str; 10] = [
    "--samples",
    "64",
    "--edge",
    "0.1",
    "--order",
    "4",
    "--m-d",
    "16",
    "--z-grid",
    "8",
];

#[test]
fn analytic_unit_disk_matrix_is_diagonal() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["simulate-nd", "--phantom", "unit", "--analytic", "--order", "3"],
    );
    let path = dir.path().join("nd.json");
    let m = NDMatrix::read_json(fs::File::open(&path).unwrap()).unwrap();
    let idx = m.index_set().indices();
    for (r, &n) in idx.iter().enumerate() {
        for c in 0..idx.len() {
            let expected = if r == c { 1.0 / n.abs() as f64 } else { 0.0 };
            assert!((m.at(r, c) - expected).norm() < 1e-12);
        }
    }
    let file: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(file["provenance"]["config"]["order"], 3);
    assert_eq!(file["provenance"]["experiment"], "simulate-nd");
}

#[test]
fn zero_scattering_data_reconstructs_ones() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut args = vec!["simulate-nd", "--phantom", "unit", "--analytic", "--difference"];
    args.extend(SMALL);
    ok(d, &args);
    ok(d, &["scatter", "--input", "nd.json", "--k-points", "16"]);
    let mut args = vec!["reconstruct", "--input", "scattering.json"];
    args.extend(SMALL);
    ok(d, &args);
    let path = d.join("reconstruction.csv");
    assert_eq!(header(&path)["experiment"], "reconstruct");
    let inside: Vec<f64> = rows(&path)
        .iter()
        .filter(|r| r[2] == "1")
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert!(!inside.is_empty());
    assert!(inside.iter().all(|s| (s - 1.0).abs() < 1e-12), "{inside:?}");
}

#[test]
fn data_error_experiment_reports_linear_slopes() {
    let dir = TempDir::new().unwrap();
    let h: Vec<String> = (1..=8).map(|j| (2.0 * PI * j as f64 / 64.0).to_string()).collect();
    let h = h.join(",");
    ok(
        dir.path(),
        &[
            "experiment",
            "data-error",
            "--measure",
            "analytic",
            "--samples",
            "1024",
            "--h",
            &h,
            "--out-dir",
            "out",
        ],
    );
    let path = dir.path().join("out/data-error.csv");
    assert_eq!(header(&path)["config"]["forward"], "analytic");
    let table = rows(&path);
    assert_eq!(table.len(), 16);
    for r in &table {
        assert_eq!(r[5], "ok");
        let slope: f64 = r[4].parse().unwrap();
        assert!((0.85..=1.15).contains(&slope), "{r:?}");
    }
}

#[test]
fn file_pipeline_matches_the_in_process_driver() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut args = vec!["simulate-nd", "--difference"];
    args.extend(SMALL);
    ok(d, &args);
    let mut args = vec!["scatter", "--input", "nd.json", "--solver-grid"];
    args.extend(SMALL);
    ok(d, &args);
    let mut args = vec!["reconstruct", "--input", "scattering.json"];
    args.extend(SMALL);
    ok(d, &args);

    let mut cfg = ExperimentConfig::default();
    cfg.mesh.samples = 64;
    cfg.mesh.edge = 0.1;
    cfg.order = 4;
    cfg.dbar.m_d = 16;
    cfg.z_grid = 8;
    let field = run_reconstruction(&cfg, true).unwrap();
    let table = rows(&d.join("reconstruction.csv"));
    assert_eq!(table.len(), field.sigma.len());
    let mut compared = 0;
    for (i, r) in table.iter().enumerate() {
        if field.inside[i] {
            let s: f64 = r[3].parse().unwrap();
            assert!(
                (s - field.value(i)).abs() <= 1e-12,
                "node {i}: {s} vs {}",
                field.value(i)
            );
            compared += 1;
        }
    }
    assert!(compared > 0);
    // the inclusion raises the reconstruction somewhere
    assert!(field.valid_nodes().any(|i| field.value(i) > 1.0));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut args = vec!["simulate-nd", "--difference"];
    args.extend(SMALL);
    ok(d, &args);
    let run = |name: &str| {
        ok(
            d,
            &[
                "noise", "--input", "nd.json", "--noise", "0.01", "--seed", "7", "--output", name,
            ],
        );
        fs::read(d.join(name)).unwrap()
    };
    assert_eq!(run("a.json"), run("a.json"));
    let sino = || {
        ok(
            d,
            &[
                "sinogram",
                "--input",
                "nd.json",
                "--thetas",
                "8",
                "--phis",
                "4",
                "--samples",
                "64",
            ],
        );
        fs::read(d.join("sinogram.csv")).unwrap()
    };
    let first = sino();
    assert_eq!(first, sino());
    assert_eq!(rows(&d.join("sinogram.csv")).len(), 32);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.json"),
        r#"{"order": 3, "phantom": {"kind": "unit"}, "mesh": {"samples": 64}}"#,
    )
    .unwrap();
    ok(
        d,
        &["simulate-nd", "--config", "c.json", "--analytic", "--output", "a.json"],
    );
    ok(
        d,
        &[
            "simulate-nd",
            "--config",
            "c.json",
            "--analytic",
            "--order",
            "2",
            "--output",
            "b.json",
        ],
    );
    let dim = |name: &str| {
        NDMatrix::read_json(fs::File::open(d.join(name)).unwrap())
            .unwrap()
            .dim()
    };
    assert_eq!(dim("a.json"), 6);
    assert_eq!(dim("b.json"), 4);
}

#[test]
fn extrapolate_fills_the_gap_of_a_trace() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let grid = BoundaryGrid::unit_disk(256).unwrap();
    let values = (0..256).map(|j| C64::new(grid.angle(j).sin(), 0.0)).collect();
    let trace = BoundaryTrace::new(grid.clone(), values).unwrap();
    trace
        .write_csv(fs::File::create(d.join("in.csv")).unwrap(), None)
        .unwrap();
    let h = PI / 8.0;
    ok(d, &["extrapolate", "--input", "in.csv", "--h", &h.to_string()]);
    let out = BoundaryTrace::read_csv(
        std::io::BufReader::new(fs::File::open(d.join("extrapolated.csv")).unwrap()),
        Some(grid.clone()),
    )
    .unwrap();
    let gap = GammaArc::new(h, 0.0).unwrap().gap_nodes(&grid);
    assert!(!gap.is_empty());
    for j in gap {
        assert!((out.values()[j] - trace.values()[j]).norm() < 1e-3);
    }
}

#[test]
fn bad_flags_print_usage_and_fail() {
    let dir = TempDir::new().unwrap();
    let out = cli(dir.path(), &["simulate-nd", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = cli(dir.path(), &["no-such-command"]);
    assert!(!out.status.success());
}

#[test]
fn failures_emit_a_machine_readable_error_line() {
    let dir = TempDir::new().unwrap();
    let out = cli(dir.path(), &["partial-nd", "--h", "7.0"]);
    assert!(!out.status.success());
    let line = String::from_utf8(out.stderr).unwrap();
    let v: Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "invalid_argument");
    let out = cli(dir.path(), &["scatter", "--input", "missing.json"]);
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "io");
}
