use std::path::Path;
use std::process::Command;

use porethin::cellmesh::{build_cell_mesh, CellGeometry};
use porethin::cellsolve::permeability_tensor;
use porethin::params::{parse_rational, LimitModelKind};
use porethin_cli::{cmd_cell, cmd_darcy, cmd_profile, cmd_regime, parse_config, CliError, Overrides, RunConfig};

fn config(text: &str, base: &Path) -> RunConfig {
    let mut c = parse_config(text, base).unwrap();
    c.output_dir = base.join("out");
    c
}

fn config_error(text: &str) -> (String, i32) {
    match parse_config(text, Path::new(".")) {
        Err(e @ CliError::Config { .. }) => {
            let code = e.exit_code();
            let CliError::Config { path, .. } = e else { unreachable!() };
            (path, code)
        }
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

const LINEAR: &str = r#"{
    "fluid": {"eta0": 2.0, "eta_inf": 0.5, "lambda": 1.0, "r": "3/2"},
    "regime": {"ell": "1/2", "gamma": 0},
    "cell": {"geometry": {"kind": "disk", "radius": 0.25}, "n": 16},
    "macro": {"l1": 1, "l2": 1, "n1": 8, "n2": 8, "force": {"kind": "rotational", "center": [0.5, 0.5], "strength": 1}},
    "profile": {"x": [0.3, 0.6], "lattice": [5, 5, 3]}
}"#;

const POWER: &str = r#"{
    "fluid": {"eta0": 2.0, "eta_inf": 0.5, "lambda": 1.5, "r": 3},
    "regime": {"ell": 0.5, "gamma": "2"},
    "cell": {"geometry": {"kind": "square", "half_width": 0.2}, "n": 8},
    "cell_samples": {"angles": 4, "magnitudes": [0, 1, 10]}
}"#;

#[test]
fn flow_index_two_is_reported_at_fluid_r() {
    let text = LINEAR.replace(r#""r": "3/2""#, r#""r": 2"#);
    assert_eq!(config_error(&text), ("fluid.r".to_string(), 2));
}

#[test]
fn unknown_and_invalid_fields_are_located() {
    let (path, code) = config_error(&LINEAR.replace(r#""lambda": 1.0"#, r#""lambda": 1.0, "mu": 3"#));
    assert!(path.starts_with("fluid"), "{path}");
    assert_eq!(code, 2);
    let (path, _) = config_error(&LINEAR.replace(r#""n": 16"#, r#""n": 7"#));
    assert_eq!(path, "cell.n");
    let (path, _) = config_error(&LINEAR.replace(r#""radius": 0.25"#, r#""radius": 0.7"#));
    assert_eq!(path, "cell.geometry");
    let (path, _) = config_error(&LINEAR.replace(r#""eta_inf": 0.5"#, r#""eta_inf": 3.0"#));
    assert!(path.starts_with("fluid."), "{path}");
}

#[test]
fn non_vtpm_regime_is_refused_by_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&LINEAR.replace(r#""ell": "1/2""#, r#""ell": "3/2""#), dir.path());
    match cmd_cell(&c) {
        Err(e @ CliError::Config { .. }) => {
            assert_eq!(e.exit_code(), 2);
            assert!(matches!(e, CliError::Config { ref path, .. } if path == "regime.ell"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn overrides_are_validated() {
    let mut c = config(LINEAR, Path::new("."));
    let odd = Overrides {
        n_cell: Some(9),
        ..Default::default()
    };
    assert_eq!(odd.apply(&mut c).unwrap_err().exit_code(), 2);
    let ok = Overrides {
        n_cell: Some(8),
        tol: Some(1e-6),
        ..Default::default()
    };
    ok.apply(&mut c).unwrap();
    assert_eq!(c.cell_n, 8);
    assert_eq!(c.solver.macro_options.tol, 1e-6);
}

#[test]
fn linear_cell_writes_permeability() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(LINEAR, dir.path());
    let report = cmd_cell(&c).unwrap();
    let expected = permeability_tensor(&build_cell_mesh(CellGeometry::Disk { radius: 0.25 }, 16).unwrap()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("out/permeability.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["a11", "a12", "a21", "a22", "fluid_area"]);
    let row: Vec<f64> = reader.records().next().unwrap().unwrap().iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], expected.matrix[0][0]);
    assert_eq!(row[3], expected.matrix[1][1]);
    assert_eq!(report.permeability.unwrap(), expected.matrix);
    assert!(dir.path().join("out/cell.vtk").exists());
}

#[test]
fn powerlaw_cell_table_has_homogeneity_column() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(POWER, dir.path());
    assert_eq!(c.model, LimitModelKind::PowerLaw);
    let report = cmd_cell(&c).unwrap();
    assert_eq!(report.samples.len(), 12);
    let mut reader = csv::Reader::from_path(dir.path().join("out/flux_table.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().next_back(), Some("homogeneity"));
    let mut rows = 0;
    for record in reader.records() {
        let h: f64 = record.unwrap()[6].parse().unwrap();
        assert!(h <= 1e-6);
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn nodal_forcing_is_read_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("force.csv")).unwrap();
    w.write_record(["fx", "fy"]).unwrap();
    for _ in 0..25 {
        w.write_record(["1", "0"]).unwrap();
    }
    w.flush().unwrap();
    let text = LINEAR
        .replace(r#""n1": 8, "n2": 8"#, r#""n1": 4, "n2": 4"#)
        .replace(
            r#"{"kind": "rotational", "center": [0.5, 0.5], "strength": 1}"#,
            r#"{"kind": "nodal_csv", "path": "force.csv"}"#,
        );
    let c = config(&text, dir.path());
    let report = cmd_darcy(&c).unwrap();
    for (x, p) in report.solution.mesh.nodes().iter().zip(&report.solution.p) {
        assert!((p - (x[0] - 0.5)).abs() <= 1e-10);
    }
    assert!(report.solution.max_speed() <= 1e-10);
    assert_eq!(report.summary["converged"], true);
}

#[test]
fn short_nodal_forcing_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("force.csv"), "fx,fy\n1,0\n").unwrap();
    let text = LINEAR.replace(
        r#"{"kind": "rotational", "center": [0.5, 0.5], "strength": 1}"#,
        r#"{"kind": "nodal_csv", "path": "force.csv"}"#,
    );
    assert!(parse_config(&text, dir.path()).is_err());
}

#[test]
fn profile_mean_matches_flux() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(LINEAR, dir.path());
    let report = cmd_profile(&c, None, None).unwrap();
    assert!(report.mean_flux_residual <= 1e-8);
    for name in ["profile.csv", "reconstruction.vtk", "profile_summary.json"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    let outside = cmd_profile(&c, Some([2.0, 0.5]), None).unwrap_err();
    assert_eq!(outside.exit_code(), 2);
}

#[test]
fn regime_rejects_newtonian_index() {
    let q = |s| parse_rational(s).unwrap();
    assert_eq!(cmd_regime(q("1/2"), q("1"), q("2")).unwrap_err().exit_code(), 2);
    let report = cmd_regime(q("2"), q("1"), q("3/2")).unwrap();
    assert!(report.note().is_some());
}

#[test]
fn binary_reports_and_exits_with_codes() {
    let out = Command::new(env!("CARGO_BIN_EXE_porethin"))
        .args(["regime", "--ell", "1/2", "--gamma", "1", "--r", "3/2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("VTPM") && text.contains("CARREAU"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, LINEAR.replace(r#""r": "3/2""#, r#""r": 2"#)).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_porethin"))
        .args(["cell", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("fluid.r"));

    let out = Command::new(env!("CARGO_BIN_EXE_porethin"))
        .args(["cell", "--config"])
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
