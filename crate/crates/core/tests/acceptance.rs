//! Acceptance suite. Runs every criterion in sequence inside one test so the
//! timings are not distorted by parallel test threads, prints one PASS/FAIL
//! line per criterion and fails if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stentfat::fatigue::{classify, mean_amp, records_from_samples, region_report, strain_extrema, FailureMode, FatigueLimits};
use stentfat::geometry::{build_stent, scale_strut_width, Frame, Section, StentDesign};
use stentfat::io;
use stentfat::loading::{default_lumen, french_to_mm, PhaseLog, Protocol, ProtocolConfig};
use stentfat::material::{fiber_update, transformation_stresses, FiberState, MaterialParams, Sense};
use stentfat::solver::{Loads, Solver, SolverConfig, SolverState};
use stentfat::svg::{emit_svg, render_svg, CurveData, CurveSeries, PlotData};
use stentfat::sweep::{run_sweep, ScenarioConfig};
use stentfat::tracking::{compression, eccentricity_index, fit_axis, radii_deviation, Axis};

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn report(id: usize, name: &'static str, budget_s: f64, elapsed: Duration, checks: Vec<(String, bool)>) -> Outcome {
    let budget = Duration::from_secs_f64(budget_s);
    let within = elapsed <= budget;
    let passed = within && checks.iter().all(|c| c.1);
    let mut detail: Vec<String> = checks.into_iter().map(|(m, ok)| format!("{}{m}", if ok { "" } else { "!! " })).collect();
    if !within {
        detail.push(format!("!! runtime {:.1} s over budget {:.0} s", elapsed.as_secs_f64(), budget_s));
    }
    Outcome { id, name, passed, detail: detail.join("; "), elapsed, budget }
}

fn print(o: &Outcome) {
    println!(
        "[{}] criterion {} {} ({:.2} s of {:.0} s): {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs_f64(),
        o.detail
    );
}

fn ramp(from: f64, to: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| from + (to - from) * i as f64 / n as f64).collect()
}

fn drive(path: &[f64], temperature: f64) -> Vec<FiberState> {
    let p = MaterialParams::default();
    let mut s = FiberState::default();
    path.iter()
        .map(|&e| {
            s = fiber_update(&s, e, &p, temperature).unwrap();
            s
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let n = 60_000;
    let mut path = ramp(0.0, 0.06, n);
    path.extend(ramp(0.06, 0.0, n));
    let states = drive(&path, 37.0);
    let (load, unload) = states.split_at(n);
    let onset = load.iter().find(|s| s.xi > 0.0).unwrap().stress;
    let done = load.iter().find(|s| s.xi >= 1.0).unwrap().stress;
    let rev_in = unload.iter().find(|s| s.xi < 1.0).unwrap().stress;
    let rev_out = unload.iter().find(|s| s.xi == 0.0).unwrap().stress;
    let last = states.last().unwrap();
    // strain left after elastic unloading of the end state
    let residual_strain = last.eps_tr.abs() + last.stress.abs() / 24_000.0;
    let near = |v: f64, target: f64| (v - target).abs() <= 0.5;
    report(
        1,
        "material loop",
        1.0,
        t.elapsed(),
        vec![
            (format!("forward onset {onset:.3} MPa"), near(onset, 250.0)),
            (format!("forward completion {done:.3} MPa"), near(done, 270.0)),
            (format!("reverse entry {rev_in:.3} MPa"), near(rev_in, 40.0)),
            (format!("reverse exit {rev_out:.3} MPa"), near(rev_out, 20.0)),
            (format!("residual strain {residual_strain:.2e}"), residual_strain < 1e-8),
        ],
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let p = MaterialParams::default();
    let table = transformation_stresses(&p, 47.0, Sense::Tension).start;
    // 1e-7 strain steps keep the overshoot past onset below 0.003 MPa
    let states = drive(&ramp(0.0, 0.014, 140_000), 47.0);
    let onset = states.iter().find(|s| s.xi > 0.0).unwrap().stress;
    report(
        2,
        "temperature shift",
        1.0,
        t.elapsed(),
        vec![
            (format!("shifted onset {table:.4} MPa"), (table - 315.27).abs() <= 0.01),
            (format!("ramped fiber onset {onset:.4} MPa"), (onset - 315.27).abs() <= 0.01),
        ],
    )
}

fn cantilever() -> (f64, f64) {
    let frame = Frame::straight_beam(20, 20.0, Section { width: 0.3, thickness: 0.3 }).unwrap();
    let mut cfg = SolverConfig { target_dt: 1e-5, damping: 150.0, ..Default::default() };
    cfg.relax.ke_ratio_tol = 1e-10;
    let solver = Solver::new(&frame, &MaterialParams::default(), &cfg, 0.0).unwrap();
    let mut state = solver.initial_state();
    let p = 0.004;
    let loads = Loads { point_forces: vec![(20, Vector3::new(0.0, 0.0, -p))], fixed: vec![0], ..Default::default() };
    solver.relax_to_equilibrium(&mut state, &loads).unwrap();
    let tip = -state.displacement(&frame, 20).z;
    let ei = 24_000.0 * 0.3f64.powi(4) / 12.0;
    (tip, p * 20f64.powi(3) / (3.0 * ei))
}

fn objectivity() -> f64 {
    let frame = build_stent(&StentDesign::corevalve26_like()).unwrap();
    let solver = Solver::new(&frame, &MaterialParams::default(), &SolverConfig::default(), 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<_> = frame.nodes.iter().map(|p| p + 0.2 * Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let q: Vec<_> = x
        .iter()
        .map(|_| UnitQuaternion::from_scaled_axis(0.05 * Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect();
    let base = solver.fiber_strains(&x, &q);
    let rot = UnitQuaternion::from_scaled_axis(Vector3::new(0.8, -1.9, 0.6));
    let shift = Vector3::new(3.0, -7.0, 11.0);
    let xr: Vec<_> = x.iter().map(|p| rot * p + shift).collect();
    let qr: Vec<_> = q.iter().map(|qi| rot * qi).collect();
    let moved = solver.fiber_strains(&xr, &qr);
    base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Crimp of the demo control, shared by criteria 3, 4 and 7.
struct DemoCrimp {
    state: SolverState,
    log: PhaseLog,
    elapsed: Duration,
    free_diameter: f64,
}

fn demo_crimp(design: &StentDesign) -> DemoCrimp {
    let frame = build_stent(design).unwrap();
    let lumen = default_lumen();
    let t = Instant::now();
    let p = Protocol::new(&frame, &MaterialParams::default(), &ProtocolConfig::default(), Some(&lumen)).unwrap();
    let (state, log) = p.crimp(french_to_mm(16.0)).unwrap();
    DemoCrimp { state, log, elapsed: t.elapsed(), free_diameter: p.free_outer_diameter() }
}

fn criterion_3(crimp: &DemoCrimp) -> Outcome {
    let t = Instant::now();
    let (tip, oracle) = cantilever();
    let rel = (tip - oracle).abs() / oracle;
    let obj = objectivity();
    // the energy check reads the crimp run shared with criterion 4
    let energy = crimp.log.max_energy_error;
    report(
        3,
        "solver verification",
        60.0,
        t.elapsed(),
        vec![
            (format!("cantilever tip {tip:.5} mm vs {oracle:.5} mm ({:.2}%)", 100.0 * rel), rel < 0.02),
            (format!("objectivity error {obj:.2e}"), obj < 1e-8),
            (format!("demo crimp energy balance error {:.2e}", energy), energy < 0.02),
        ],
    )
}

fn criterion_4(crimp: &DemoCrimp) -> Outcome {
    let target = french_to_mm(16.0);
    let r_max = crimp.state.positions.iter().map(|p| p.xy().norm()).fold(0.0, f64::max);
    let limit = 2.67 + 0.01;
    report(
        4,
        "crimp to 16 Fr",
        300.0,
        crimp.elapsed,
        vec![
            (format!("free diameter {:.3} mm crimped to {target:.3} mm", crimp.free_diameter), true),
            (format!("max node radius {r_max:.4} mm (limit {limit:.2})"), r_max <= limit),
            (format!("max KE/SE {:.4}", crimp.log.max_ke_ratio), crimp.log.max_ke_ratio < 0.05),
            (format!("sheath force {:.2} N, {} steps", crimp.state.contact.sheath_force(), crimp.log.steps), true),
        ],
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let control = StentDesign::corevalve26_like();
    let variants = [scale_strut_width(&control, 1.2).unwrap(), scale_strut_width(&control, 1.0).unwrap(), scale_strut_width(&control, 0.8).unwrap()];
    let free = control.free_diameter();
    let diameters = [free, 28.0, 24.0, 20.0, 16.0, 12.0, 8.0, french_to_mm(16.0)];
    let mut curves = Vec::new();
    for v in &variants {
        let frame = build_stent(v).unwrap();
        let p = Protocol::new(&frame, &MaterialParams::default(), &ProtocolConfig::default(), None).unwrap();
        curves.push(p.radial_force_curve(&diameters).unwrap().forces);
    }
    let mut checks = Vec::new();
    for (v, f) in variants.iter().zip(&curves) {
        let fmt: Vec<String> = f.iter().map(|x| format!("{x:.2}")).collect();
        checks.push((format!("{} free-diameter force {:.2e} N", v.name, f[0]), f[0] < 0.1));
        checks.push((format!("{} monotone [{}]", v.name, fmt.join(", ")), f.windows(2).all(|w| w[1] >= w[0])));
    }
    let ordered = (0..diameters.len()).all(|i| curves[0][i] >= curves[1][i] && curves[1][i] >= curves[2][i]);
    checks.push(("width ordering +20% >= control >= -20% at every diameter".into(), ordered));
    report(5, "radial force", 600.0, t.elapsed(), checks)
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let limits = FatigueLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0usize;
    let mut fails = 0usize;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=200);
        let center = rng.gen_range(-0.1..0.12);
        let spread = rng.gen_range(0.0..0.012);
        let h: Vec<f64> = (0..len).map(|_| center + rng.gen_range(-spread..=spread)).collect();
        // oracle: sort a copy, then apply the rectangular limits directly
        let mut sorted = h.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (o_max, o_min) = (sorted[len - 1], sorted[0]);
        let (o_mean, o_amp) = ((o_max + o_min) / 2.0, (o_max - o_min) / 2.0);
        let o_mode = match (o_amp > 0.004, o_mean.abs() > 0.08) {
            (false, false) => FailureMode::None,
            (true, false) => FailureMode::Amplitude,
            (false, true) => FailureMode::Mean,
            (true, true) => FailureMode::Both,
        };
        let (hi, lo) = strain_extrema(&h).unwrap();
        let (m, a) = mean_amp(hi, lo).unwrap();
        let (failed, mode) = classify(m, a, &limits);
        if hi.to_bits() != o_max.to_bits() || lo.to_bits() != o_min.to_bits() || mode != o_mode || failed != (o_mode != FailureMode::None) {
            mismatches += 1;
        }
        fails += failed as usize;
    }
    let fixed = [((0.015, 0.005), FailureMode::Amplitude), ((0.09, 0.001), FailureMode::Mean), ((0.0122, 0.0024), FailureMode::None)];
    let fixed_ok = fixed.iter().all(|&((m, a), want)| classify(m, a, &limits).1 == want);
    report(
        6,
        "fatigue classifier oracle",
        5.0,
        t.elapsed(),
        vec![
            (format!("{mismatches} mismatches in 10000 histories ({fails} failing)"), mismatches == 0),
            ("fixed points amplitude / mean / pass".into(), fixed_ok),
        ],
    )
}

struct BeatRun {
    name: String,
    peak: f64,
    periodicity: f64,
}

fn beat_variant(design: &StentDesign, crimped: Option<&SolverState>) -> BeatRun {
    let scenario = ScenarioConfig::default();
    let frame = build_stent(design).unwrap();
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen)).unwrap();
    let owned;
    let crimped = match crimped {
        Some(s) => s,
        None => {
            owned = p.crimp(french_to_mm(scenario.crimp_french)).unwrap().0;
            &owned
        }
    };
    let (deployed, _) = p.deploy(crimped, &scenario.lumen, scenario.implantation_depth).unwrap();
    let b = p.beat_cycles(&deployed, &scenario.lumen, 3).unwrap();
    BeatRun { name: design.name.clone(), peak: b.tracking.peak_compression(), periodicity: b.periodicity[1] }
}

fn criterion_7(control_crimp: &DemoCrimp) -> Outcome {
    let t = Instant::now();
    let control = StentDesign::corevalve26_like();
    let wide = beat_variant(&scale_strut_width(&control, 1.2).unwrap(), None);
    let mid = beat_variant(&control, Some(&control_crimp.state));
    let thin = beat_variant(&scale_strut_width(&control, 0.8).unwrap(), None);
    // the control crimp was computed once for criteria 3 and 4; charge it here too
    let elapsed = t.elapsed() + control_crimp.elapsed;
    let mut checks = Vec::new();
    for r in [&wide, &mid, &thin] {
        checks.push((format!("{} cycle 3 vs 2 difference {:.3}%", r.name, 100.0 * r.periodicity), r.periodicity < 0.05));
    }
    checks.push((format!("control peak compression {:.3} mm", mid.peak), (mid.peak - 3.5).abs() <= 0.6));
    checks.push((
        format!("ordering x1.2 {:.3} < control {:.3} < x0.8 {:.3} mm", wide.peak, mid.peak, thin.peak),
        wide.peak < mid.peak && mid.peak < thin.peak,
    ));
    report(7, "cyclic pipeline", 900.0, elapsed, checks)
}

fn ring(n: usize, rx: f64, ry: f64, z: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            Vector3::new(rx * t.cos(), ry * t.sin(), z)
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let frame = build_stent(&StentDesign::corevalve26_like()).unwrap();
    let all: Vec<usize> = (0..frame.n_nodes()).collect();
    // ovalized and squeezed copy of the free frame
    let deformed: Vec<_> = frame.nodes.iter().map(|p| Vector3::new(0.9 * p.x, 0.8 * p.y, p.z + 0.01 * p.x)).collect();
    let metrics = |pts: &[Vector3<f64>]| {
        let ax = fit_axis(pts, &frame.rings).unwrap();
        (
            compression(pts, &frame.nodes, &all, &frame.rings).unwrap(),
            eccentricity_index(pts, &all, &ax).unwrap(),
            radii_deviation(pts, &all, &ax).unwrap(),
        )
    };
    let base = metrics(&deformed);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let q = UnitQuaternion::from_scaled_axis(Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
        let s = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
        let moved: Vec<_> = deformed.iter().map(|p| q * p + s).collect();
        let m = metrics(&moved);
        worst = worst.max((m.0 - base.0).abs()).max((m.1 - base.1).abs()).max((m.2 - base.2).abs());
    }

    let circle = ring(48, 12.0, 12.0, 0.0);
    let idx: Vec<usize> = (0..48).collect();
    let cax = fit_axis(&circle, &[]).unwrap();
    let circle_ei = eccentricity_index(&circle, &idx, &cax).unwrap();
    let circle_dev = radii_deviation(&circle, &idx, &cax).unwrap();
    let circle_comp = compression(&circle, &circle, &idx, &[]).unwrap();

    let ellipse = ring(96, 13.0, 11.0, 0.0);
    let idx96: Vec<usize> = (0..96).collect();
    let ei = eccentricity_index(&ellipse, &idx96, &fit_axis(&ellipse, &[]).unwrap()).unwrap();
    let exact = 1.0 - 11.0 / 13.0;

    let mut two = ring(10, 12.0, 12.0, 0.0);
    two.extend(ring(10, 14.0, 14.0, 0.0));
    let dev = radii_deviation(&two, &(0..20).collect::<Vec<_>>(), &Axis { centroid: Vector3::zeros(), direction: Vector3::z() }).unwrap();

    report(
        8,
        "tracking metrics",
        1.0,
        t.elapsed(),
        vec![
            (format!("rigid-motion change {worst:.2e}"), worst < 1e-9),
            (format!("circle EI {circle_ei:.1e}, deviation {circle_dev:.1e}, compression {circle_comp:.1e}"), circle_ei < 1e-12 && circle_dev < 1e-12 && circle_comp.abs() < 1e-12),
            (format!("ellipse 13/11 EI {ei:.9} vs {exact:.9}"), (ei - exact).abs() <= 1e-6),
            (format!("two-ring deviation {dev:.12} mm"), (dev - 1.0).abs() < 1e-12),
        ],
    )
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::mini_scenario();
    let designs = vec![common::mini_design("mini-a", 0.3), common::mini_design("mini-b", 0.36), common::mini_design("mini-a", 0.3)];

    let serial = run_sweep(&designs, &scenario, Some(1)).unwrap();
    let parallel = run_sweep(&designs, &scenario, Some(3)).unwrap();
    let strip = |v: &[stentfat::sweep::SweepResult]| v.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
    let all_ok = serial.iter().all(|r| r.is_ok());
    let same = all_ok && strip(&serial) == strip(&parallel) && serial[0].without_timing() == serial[2].without_timing();

    // reporting on one full run of the first design
    let run = stentfat::sweep::run_pipeline(&designs[0], &scenario).unwrap();
    let report_map = region_report(&run.records);
    let total: usize = report_map.values().map(|s| s.count).sum();
    let failed: usize = report_map.values().map(|s| s.failed_count).sum();
    let sums = total == run.records.len() && failed == run.records.iter().filter(|r| r.failed).count();
    let recount = records_from_samples(run.beat.strains.cycle(scenario.extraction_cycle()), &run.beat.strains.points, &scenario.limits).unwrap();
    let recount_ok = recount == run.records;

    let p = dir.path();
    io::write_fatigue_csv(&p.join("f.csv"), &run.records).unwrap();
    io::write_tracking_csv(&p.join("t.csv"), &run.beat.tracking).unwrap();
    io::write_energy_csv(&p.join("e.csv"), &run.crimp_log.trace).unwrap();
    io::write_strain_history_csv(&p.join("s.csv"), &run.beat.strains, 1).unwrap();
    let strains = io::read_strain_history_csv(&p.join("s.csv")).unwrap();
    let roundtrip = io::read_fatigue_csv(&p.join("f.csv")).unwrap() == run.records
        && io::read_tracking_csv(&p.join("t.csv"), run.beat.tracking.band.clone()).unwrap() == run.beat.tracking
        && io::read_energy_csv(&p.join("e.csv")).unwrap() == run.crimp_log.trace
        && strains.samples == run.beat.strains.cycle(1)
        && strains.points == run.beat.strains.points;

    let plots = [
        PlotData::Scatter(stentfat::fatigue::constant_life_data(&run.records, &scenario.limits, None)),
        PlotData::Heat(stentfat::fatigue::polar_projection(&run.records, "polar")),
        PlotData::Curve(CurveData {
            title: "tracking".into(),
            x_label: "time (s)".into(),
            y_label: "compression (mm)".into(),
            series: vec![CurveSeries { label: "whole".into(), points: run.beat.tracking.times.iter().copied().zip(run.beat.tracking.compression.iter().copied()).collect() }],
        }),
    ];
    let mut svg_same = true;
    for (i, d) in plots.iter().enumerate() {
        let (a, b) = (p.join(format!("a{i}.svg")), p.join(format!("b{i}.svg")));
        emit_svg(d, &a).unwrap();
        emit_svg(d, &b).unwrap();
        svg_same &= std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap() && render_svg(d) == render_svg(d);
    }

    report(
        9,
        "reporting integrity",
        60.0,
        t.elapsed(),
        vec![
            (format!("region counts sum: {failed} failed of {total} points"), sums),
            ("stored strain histories reproduce the fatigue records".into(), recount_ok),
            ("CSV round trip (fatigue, tracking, energy, strain history)".into(), roundtrip),
            ("SVG bytes identical across emissions".into(), svg_same),
            (format!("sweep rows identical for 1 and 3 threads, duplicate design rows identical ({} rows)", serial.len()), same),
        ],
    )
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let run = |o: Outcome, results: &mut Vec<Outcome>| {
        print(&o);
        results.push(o);
    };
    run(criterion_1(), &mut results);
    run(criterion_2(), &mut results);
    let crimp = demo_crimp(&StentDesign::corevalve26_like());
    run(criterion_3(&crimp), &mut results);
    run(criterion_4(&crimp), &mut results);
    run(criterion_5(), &mut results);
    run(criterion_6(), &mut results);
    run(criterion_7(&crimp), &mut results);
    run(criterion_8(), &mut results);
    run(criterion_9(), &mut results);

    println!("---- acceptance summary ----");
    for o in &results {
        println!("[{}] criterion {}", if o.passed { "PASS" } else { "FAIL" }, o.id);
    }
    let failed: Vec<usize> = results.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
