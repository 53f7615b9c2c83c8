use std::fs::File;
use std::path::Path;
use std::process::{Command, Output};

use mrguide_core::workspace::TriMesh;
use nalgebra::{Point3, Vector3};
use serde_json::Value;

fn mrguide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrguide")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn ik_vertical_line() {
    let out = mrguide(&["ik", "--entry", "10,5,0", "--target", "10,5,-120"]);
    let v = stdout_json(&out);
    for (k, want) in [("x_u", 10.0), ("y_u", 5.0), ("x_l", 10.0), ("y_l", 5.0)] {
        assert_eq!(v["pose"][k].as_f64().unwrap(), want);
    }
    assert_eq!(v["incline_deg"].as_f64().unwrap(), 0.0);
    assert!(stderr(&out).starts_with("config {"));
}

#[test]
fn module_errors_give_one_parseable_line() {
    let out = mrguide(&["ik", "--entry", "60,0,0", "--target", "60,0,-100"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    let line = err.lines().find(|l| l.starts_with("error ")).unwrap();
    assert!(line.starts_with("error kind=OutOfTravel message=\""), "{line}");
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flags_and_bad_triples_rejected() {
    assert!(!mrguide(&["ik", "--entry", "0,0,0", "--target", "0,0,-1", "--bogus"]).status.success());
    assert!(!mrguide(&["ik", "--entry", "0,0", "--target", "0,0,-1"]).status.success());
    assert!(!mrguide(&["ik", "--entry", "0,x,0", "--target", "0,0,-1"]).status.success());
}

#[test]
fn fk_reports_line_and_tip() {
    let v = stdout_json(&mrguide(&["fk", "--pose", "0,0,2,0", "--depth", "45.7"]));
    let tip: Vec<f64> = serde_json::from_value(v["tip"].clone()).unwrap();
    // the tip moves as far again beyond the lower bearing
    assert!((tip[0] - 4.0).abs() < 1e-12 && tip[1].abs() < 1e-12);
    assert!((tip[2] - (-82.2 - 45.7)).abs() < 1e-12);
    assert!(v["direction"][2].as_f64().unwrap() < 0.0);
}

#[test]
fn plan_prints_log_without_moving() {
    let out = mrguide(&["plan", "--goal", "12,0,3,0"]);
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let moves: Vec<(u64, f64)> = lines
        .iter()
        .map(|l| (l["axis"].as_u64().unwrap(), l["delta_mm"].as_f64().unwrap()))
        .collect();
    assert_eq!(
        moves,
        vec![(1, 5.0), (4, 0.0), (1, 5.0), (4, 0.0), (3, 3.0), (4, 0.0), (1, 2.0)]
    );
    let last = &lines.last().unwrap()["pose"];
    assert_eq!(last["x_u"].as_f64().unwrap(), 12.0);
    assert_eq!(last["x_l"].as_f64().unwrap(), 3.0);
}

#[test]
fn run_writes_trajectory_and_reaches_goal() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let out = mrguide(&["run", "--entry", "5,-3,0", "--target", "-5,3,-150", "--out", csv_path.to_str().unwrap()]);
    let v = stdout_json(&out);
    assert_eq!(v["reached"], true);
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "t");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(rows.len() > 10);
    let times: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
    let incline = header.iter().position(|h| h == "incline_deg").unwrap();
    assert!(rows.iter().all(|r| r[incline].parse::<f64>().unwrap() <= 30.0 + 1e-6));
}

#[test]
fn workspace_writes_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cloud.csv");
    let json_path = dir.path().join("cloud.json");
    let v = stdout_json(&mrguide(&[
        "workspace",
        "--depth",
        "0,50",
        "--resolution",
        "5",
        "--out",
        csv_path.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]));
    let n = v["samples"].as_u64().unwrap() as usize;
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), n + 1);
    let cloud: Value = serde_json::from_reader(File::open(&json_path).unwrap()).unwrap();
    assert_eq!(cloud["samples"].as_array().unwrap().len(), n);
    let bound = 27.5 + 50.0 * 30f64.to_radians().tan();
    assert!(v["max_lateral_extent_mm"].as_f64().unwrap() <= bound + 1e-9);
}

fn write_ellipsoid(path: &Path) {
    let mesh = TriMesh::ellipsoid(Point3::new(0.0, 0.0, -130.0), Vector3::new(60.0, 45.0, 30.0), 16, 32).unwrap();
    mesh.write_stl(File::create(path).unwrap()).unwrap();
}

#[test]
fn coverage_of_stl_mesh_is_a_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let stl = dir.path().join("ellipsoid.stl");
    write_ellipsoid(&stl);
    let v = stdout_json(&mrguide(&["coverage", "--mesh", stl.to_str().unwrap(), "--pitch", "4"]));
    let ratio = v["ratio"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ratio));
    assert!(ratio > 0.0);
    assert_eq!(v["pitch_mm"].as_f64().unwrap(), 4.0);
}

#[test]
fn coverage_rejects_missing_mesh() {
    let out = mrguide(&["coverage", "--mesh", "/nonexistent/organ.stl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error kind=Io"));
}

#[test]
fn config_file_changes_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("robot.json");
    std::fs::write(
        &cfg,
        r#"{"z_u_mm": -30, "z_l_mm": -90, "travel_x_mm": 55, "travel_y_mm": 30, "max_incline_deg": 30}"#,
    )
    .unwrap();
    let out = mrguide(&["--config", cfg.to_str().unwrap(), "ik", "--entry", "0,0,0", "--target", "12,0,-120"]);
    let v = stdout_json(&out);
    assert!((v["pose"]["x_u"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((v["pose"]["x_l"].as_f64().unwrap() - 9.0).abs() < 1e-12);
    assert!(stderr(&out).contains("\"z_l_mm\":-90.0"));

    std::fs::write(&cfg, r#"{"z_u_mm": -90, "z_l_mm": -30}"#).unwrap();
    let out = mrguide(&["--config", cfg.to_str().unwrap(), "fk", "--pose", "0,0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_writes_reports_and_repeats_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = mrguide(&["evaluate", "--spec", "default", "--seed", "7", "--out", d.to_str().unwrap()]);
        let summary = stdout_json(&out);
        assert_eq!(summary["trials"], 234);
        assert_eq!(summary["seed"], 7);
        (std::fs::read(d.join("records.csv")).unwrap(), std::fs::read(d.join("summary.json")).unwrap())
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8_lossy(&a.0).lines().count(), 235);
}

#[test]
fn evaluate_ideal_spec_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&mrguide(&["evaluate", "--spec", "ideal", "--out", dir.path().to_str().unwrap()]));
    assert!(v["position_mm"]["mean"].as_f64().unwrap() < 1e-9);
}

#[test]
fn evaluate_reads_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"depth_mm": 40, "grid": {"upper_cols": 3, "upper_rows": 1}}"#).unwrap();
    let v = stdout_json(&mrguide(&["evaluate", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]));
    assert_eq!(v["trials"], 27);
    assert_eq!(v["depth_mm"], 40.0);

    std::fs::write(&spec, "{not json").unwrap();
    let out = mrguide(&["evaluate", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(stderr(&out).contains("error kind=InvalidJson"));
}

#[test]
fn help_documents_every_subcommand() {
    let out = mrguide(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["ik", "fk", "plan", "run", "workspace", "coverage", "evaluate", "serve"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
