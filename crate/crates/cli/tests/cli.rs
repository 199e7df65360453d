use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stentfat::geometry::{StentDesign, ThicknessBand};
use stentfat::io::{read_json, read_radial_force_csv, Manifest};
use stentfat::loading::{LumenModel, MotionProfile};
use stentfat::sweep::ScenarioConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stentfat"));
    c.env_remove("STENTFAT_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small design and a matching fast scenario; returns their paths.
fn fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let design = StentDesign {
        name: "mini".into(),
        n_cells: 6,
        n_rows: 2,
        ring_diameters: vec![12.0, 11.5, 12.0],
        row_heights: vec![10.0, 10.0],
        strut_width: 0.3,
        thickness_profile: vec![ThicknessBand { from: 0.0, to: 1.0, thickness: 0.3 }],
        region_bands: Default::default(),
        elements_per_strut: 2,
    };
    let mut scenario = ScenarioConfig {
        crimp_french: 24.0,
        lumen: LumenModel {
            base_radius_profile: vec![(-30.0, 5.6), (0.0, 5.5), (60.0, 5.7)],
            wall_penalty: 200.0,
            tissue_stiffness: Some(5.0),
            friction_mu: 0.3,
            motion: MotionProfile { period: 0.2, peak_time: 0.06, radial_amplitude: 0.12, ovalization_amplitude: 0.15, ..Default::default() },
        },
        implantation_depth: 2.0,
        n_cycles: 2,
        ..Default::default()
    };
    scenario.protocol.crimp_rate = 40.0;
    scenario.protocol.samples_per_cycle = 20;
    let d = dir.join("mini.json");
    let sc = dir.join("scenario.json");
    fs::write(&d, serde_json::to_string_pretty(&design).unwrap()).unwrap();
    fs::write(&sc, serde_json::to_string_pretty(&scenario).unwrap()).unwrap();
    (d, sc)
}

fn manifest_paths(out: &Path) -> Vec<String> {
    let m: Manifest = read_json(&out.join("manifest.json")).unwrap();
    for a in &m.artifacts {
        assert_eq!(fs::metadata(out.join(&a.path)).unwrap().len(), a.bytes);
    }
    m.artifacts.into_iter().map(|a| a.path).collect()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["build", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_design_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "build", "--design", s(&dir.path().join("nope.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn build_writes_frame_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (design, _) = fixtures(dir.path());
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "build", "--design", s(&design)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = manifest_paths(&out);
    assert!(files.contains(&"frame.json".to_string()));
    let summary: serde_json::Value = read_json(&out.join("frame_summary.json")).unwrap();
    assert_eq!(summary["n_elements"], 48);
}

#[test]
fn radial_force_rows_are_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let (design, scenario) = fixtures(dir.path());
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "--scenario", s(&scenario), "radialforce", "--design", s(&design), "--diameters", "12:6:7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_radial_force_csv(&out.join("radial_force.csv")).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows[0].1 < 0.1);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1), "{rows:?}");
    assert!(manifest_paths(&out).contains(&"radial_force.svg".to_string()));
}

#[test]
fn staged_pipeline_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (design, scenario) = fixtures(dir.path());
    let stage = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["--out", s(&out), "--scenario", s(&scenario), name];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let crimp = stage("crimp", &["--design", s(&design)]);
    let crimped = crimp.join("crimped_state.json");
    let deploy = stage("deploy", &["--design", s(&design), "--state", s(&crimped), "--depth", "2"]);
    let deployed = deploy.join("deployed_state.json");
    let beat = stage("beat", &["--design", s(&design), "--state", s(&deployed)]);
    let strains = beat.join("strain_history.csv");
    let fatigue = stage("fatigue", &["--strains", s(&strains)]);
    let files = manifest_paths(&fatigue);
    for f in ["fatigue.csv", "constant_life_all.svg", "polar_all.svg", "region_report.json"] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
    }
    let svg = fs::read_to_string(fatigue.join("constant_life_all.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn demo_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (design, scenario) = fixtures(dir.path());
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "--scenario", s(&scenario), "demo", "--design", s(&design)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = manifest_paths(&out);
    for f in ["energy.csv", "tracking.csv", "fatigue.csv", "summary.json", "run.json"] {
        assert!(files.contains(&f.to_string()), "{f} missing");
    }
    assert!(files.iter().any(|f| f.starts_with("constant_life_") && f.ends_with(".svg")));
    assert!(files.iter().any(|f| f.starts_with("polar_") && f.ends_with(".svg")));
    let header = fs::read_to_string(out.join("tracking.csv")).unwrap();
    assert!(header.starts_with("time_s,avg_radius_mm,compression_mm"));
}

#[test]
fn infeasible_crimp_exits_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let (design, scenario) = fixtures(dir.path());
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "--scenario", s(&scenario), "crimp", "--design", s(&design), "--diameter", "1.0"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let diag: serde_json::Value = read_json(&out.join("error.json")).unwrap();
    assert_eq!(diag["kind"], "infeasible_crimp");
}

#[test]
fn sweep_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let (_, scenario) = fixtures(dir.path());
    let cfg = dir.path().join("sweep.json");
    let sc: serde_json::Value = read_json(&scenario).unwrap();
    fs::write(&cfg, serde_json::json!({"designs": ["mini.json", "mini.json"], "scenario": sc}).to_string()).unwrap();
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "sweep", "--config", s(&cfg), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("design,anchorage_n"));
    // identical designs give identical rows apart from the wall-clock column
    let strip = |l: &str| {
        let mut f: Vec<&str> = l.split(',').collect();
        f.remove(13);
        f.join(",")
    };
    assert_eq!(strip(lines[1]), strip(lines[2]));
    let o = run(&["--out", s(&out), "sweep", "--config", s(&cfg), "--rank-by", "beauty"]);
    assert_eq!(o.status.code(), Some(2));
}
