use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use stentfat::fatigue::{constant_life_data, polar_projection, records_from_samples, region_report, FatigueRecord};
use stentfat::geometry::{build_stent, Frame, Region, StentDesign};
use stentfat::io;
use stentfat::loading::{anchorage_force, french_to_mm, EnergySample, Protocol};
use stentfat::material::MaterialParams;
use stentfat::solver::SolverState;
use stentfat::svg::{emit_svg, CurveData, CurveSeries, PlotData};
use stentfat::sweep::{rank_designs, run_pipeline, run_sweep, summarize, write_sweep_csv, RankKey, ScenarioConfig};
use stentfat::tracking::{Band, Tracker, TrackingSeries};
use stentfat::Error;

use crate::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    /// The pipeline itself failed; exit code 1.
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Runtime(Error::Validation(_)) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(what: &str, path: &Path, e: impl fmt::Display) -> Outcome<T> {
    Err(Failure::Usage(format!("{what} {}: {e}", path.display())))
}

fn load_design(path: &Path) -> Outcome<StentDesign> {
    StentDesign::load(path).or_else(|e| usage("design", path, e))
}

fn load_state(path: &Path) -> Outcome<SolverState> {
    io::read_json(path).or_else(|e| usage("state", path, e))
}

/// Scenario from `--scenario`, with `--material` taking precedence.
fn load_scenario(cli: &Cli) -> Outcome<ScenarioConfig> {
    let mut s = match &cli.common.scenario {
        Some(p) => io::read_json::<ScenarioConfig>(p).or_else(|e| usage("scenario", p, e))?,
        None => ScenarioConfig::default(),
    };
    if let Some(p) = &cli.common.material {
        s.material = MaterialParams::load(p).or_else(|e| usage("material", p, e))?;
    }
    s.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(s)
}

/// Parses `start:end:count` (inclusive, evenly spaced) or `a,b,c`.
pub fn parse_diameters(spec: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    let out = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:end:count, got {spec:?}"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|e| format!("bad count {:?}: {e}", parts[2]))?;
        match n {
            0 => return Err("count must be >= 1".into()),
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        spec.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
    };
    if out.iter().any(|d| !(*d > 0.0)) {
        return Err("diameters must be > 0".into());
    }
    if out.windows(2).any(|w| w[1] > w[0]) {
        return Err("diameters must be descending".into());
    }
    Ok(out)
}

/// Files written by a command, relative to the output directory.
struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
    plots: bool,
}

impl Artifacts {
    fn new(cli: &Cli) -> Outcome<Self> {
        let dir = cli.common.out.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("output directory {}: {e}", dir.display())))?;
        Ok(Artifacts { dir, files: Vec::new(), plots: !cli.common.no_plots })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(PathBuf::from(name));
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let p = self.path(name);
        Ok(io::write_json(&p, value)?)
    }

    fn svg(&mut self, name: &str, data: &PlotData) -> Outcome<()> {
        if self.plots {
            let p = self.path(name);
            emit_svg(data, &p)?;
        }
        Ok(())
    }

    fn finish(self, command: &str) -> Outcome<()> {
        io::write_manifest(&self.dir, command, &self.files)?;
        log::info!("wrote {} artifacts to {}", self.files.len(), self.dir.display());
        Ok(())
    }
}

/// Echo of the resolved run configuration.
#[derive(Debug, Serialize, Deserialize)]
struct RunConfig {
    command: String,
    design: Option<String>,
    material: Option<String>,
    seed: u64,
    plots: bool,
    scenario: ScenarioConfig,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Build { .. } => "build",
        Command::Crimp { .. } => "crimp",
        Command::Radialforce { .. } => "radialforce",
        Command::Deploy { .. } => "deploy",
        Command::Beat { .. } => "beat",
        Command::Fatigue { .. } => "fatigue",
        Command::Sweep { .. } => "sweep",
        Command::Demo { .. } => "demo",
    }
}

fn design_arg(c: &Command) -> Option<&Path> {
    match c {
        Command::Build { design } | Command::Crimp { design, .. } | Command::Radialforce { design, .. } => Some(design),
        Command::Deploy { design, .. } | Command::Beat { design, .. } => Some(design),
        Command::Demo { design, .. } => design.as_deref(),
        Command::Fatigue { .. } | Command::Sweep { .. } => None,
    }
}

pub fn run(cli: &Cli) -> Outcome<()> {
    let scenario = load_scenario(cli)?;
    let mut out = Artifacts::new(cli)?;
    out.json(
        "run.json",
        &RunConfig {
            command: command_name(&cli.command).into(),
            design: design_arg(&cli.command).map(|p| p.display().to_string()),
            material: cli.common.material.as_ref().map(|p| p.display().to_string()),
            seed: cli.common.seed,
            plots: out.plots,
            scenario: scenario.clone(),
        },
    )?;
    match &cli.command {
        Command::Build { design } => build(&load_design(design)?, &mut out)?,
        Command::Crimp { design, french, diameter } => {
            let target = match (french, diameter) {
                (_, Some(d)) => *d,
                (Some(f), None) => french_to_mm(*f),
                (None, None) => french_to_mm(scenario.crimp_french),
            };
            crimp(&load_design(design)?, &scenario, target, &mut out)?
        }
        Command::Radialforce { design, diameters } => {
            let d = parse_diameters(diameters).map_err(|e| Failure::Usage(format!("--diameters: {e}")))?;
            radial_force(&load_design(design)?, &scenario, &d, &mut out)?
        }
        Command::Deploy { design, state, depth } => {
            let depth = depth.unwrap_or(scenario.implantation_depth);
            deploy(&load_design(design)?, &scenario, &load_state(state)?, depth, &mut out)?
        }
        Command::Beat { design, state, cycles } => {
            let mut scenario = scenario.clone();
            if let Some(n) = cycles {
                scenario.n_cycles = *n;
                scenario.extraction_cycle = None;
            }
            scenario.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            beat(&load_design(design)?, &scenario, &load_state(state)?, &mut out)?
        }
        Command::Fatigue { strains } => {
            let cycle = io::read_strain_history_csv(strains).or_else(|e| usage("strain history", strains, e))?;
            let records = records_from_samples(&cycle.samples, &cycle.points, &scenario.limits)?;
            fatigue_outputs(&records, &scenario, &mut out)?
        }
        Command::Sweep { config, threads, rank_by } => {
            let key: RankKey = rank_by.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            sweep(config, cli, *threads, key, &mut out)?
        }
        Command::Demo { design, cycles } => {
            let d = match design {
                Some(p) => load_design(p)?,
                None => StentDesign::corevalve26_like(),
            };
            let mut scenario = scenario.clone();
            if let Some(n) = cycles {
                scenario.n_cycles = *n;
                scenario.extraction_cycle = None;
            }
            scenario.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            demo(&d, &scenario, &mut out)?
        }
    }
    let line = std::env::args().collect::<Vec<_>>().join(" ");
    out.finish(&line)
}

fn build(design: &StentDesign, out: &mut Artifacts) -> Outcome<()> {
    let frame = build_stent(design)?;
    out.json(
        "frame_summary.json",
        &json!({
            "name": frame.name,
            "n_nodes": frame.n_nodes(),
            "n_elements": frame.elements.len(),
            "n_struts": frame.struts.len(),
            "region_elements": frame.region_counts(),
            "free_diameter_mm": design.free_diameter(),
            "length_mm": design.length(),
        }),
    )?;
    out.json("frame.json", &frame)
}

fn energy_plot(trace: &[EnergySample]) -> PlotData {
    let series = |label: &str, f: fn(&EnergySample) -> f64| CurveSeries {
        label: label.into(),
        points: trace.iter().map(|e| (e.time, f(e))).collect(),
    };
    PlotData::Curve(CurveData {
        title: "energy".into(),
        x_label: "time (s)".into(),
        y_label: "energy (mJ)".into(),
        series: vec![series("kinetic", |e| e.kinetic), series("strain", |e| e.strain), series("external work", |e| e.external_work)],
    })
}

fn write_energy(trace: &[EnergySample], out: &mut Artifacts) -> Outcome<()> {
    let p = out.path("energy.csv");
    io::write_energy_csv(&p, trace)?;
    out.svg("energy.svg", &energy_plot(trace))
}

fn crimp(design: &StentDesign, scenario: &ScenarioConfig, target: f64, out: &mut Artifacts) -> Outcome<()> {
    let frame = build_stent(design)?;
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen))?;
    let (state, log) = p.crimp(target)?;
    write_energy(&log.trace, out)?;
    out.json("crimped_state.json", &state)?;
    out.json(
        "crimp.json",
        &json!({
            "design": design.name,
            "target_diameter_mm": target,
            "sheath_force_n": state.contact.sheath_force(),
            "strain_energy_mj": state.strain_energy,
            "max_ke_ratio": log.max_ke_ratio,
            "max_energy_error": log.max_energy_error,
            "steps": log.steps,
            "added_mass_fraction": p.solver.added_mass_fraction(),
        }),
    )
}

fn radial_force(design: &StentDesign, scenario: &ScenarioConfig, diameters: &[f64], out: &mut Artifacts) -> Outcome<()> {
    let frame = build_stent(design)?;
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, None)?;
    let curve = p.radial_force_curve(diameters)?;
    let path = out.path("radial_force.csv");
    io::write_radial_force_csv(&path, &curve)?;
    out.svg(
        "radial_force.svg",
        &PlotData::Curve(CurveData {
            title: format!("radial force, {}", design.name),
            x_label: "diameter (mm)".into(),
            y_label: "radial force (N)".into(),
            series: vec![CurveSeries { label: design.name.clone(), points: curve.diameters.iter().copied().zip(curve.forces.iter().copied()).collect() }],
        }),
    )
}

fn deployed_compression(frame: &Frame, state: &SolverState) -> Outcome<TrackingSeries> {
    let mut t = Tracker::new(frame, &frame.nodes, Band::Whole)?;
    t.record(state.time, &state.positions)?;
    Ok(t.series)
}

fn deploy(design: &StentDesign, scenario: &ScenarioConfig, crimped: &SolverState, depth: f64, out: &mut Artifacts) -> Outcome<()> {
    let frame = build_stent(design)?;
    check_state(&frame, crimped)?;
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen))?;
    let (state, log) = p.deploy(crimped, &scenario.lumen, depth)?;
    let tr = deployed_compression(&frame, &state)?;
    write_energy(&log.trace, out)?;
    out.json("deployed_state.json", &state)?;
    out.json(
        "deploy.json",
        &json!({
            "design": design.name,
            "implantation_depth_mm": depth,
            "anchorage_force_n": anchorage_force(&state.contact),
            "compression_mm": tr.compression[0],
            "eccentricity_index": tr.eccentricity_index[0],
            "max_ke_ratio": log.max_ke_ratio,
            "steps": log.steps,
        }),
    )
}

fn check_state(frame: &Frame, state: &SolverState) -> Outcome<()> {
    if state.positions.len() != frame.n_nodes() {
        return Err(Failure::Usage(format!(
            "state has {} nodes but the design builds {}",
            state.positions.len(),
            frame.n_nodes()
        )));
    }
    Ok(())
}

fn tracking_plot(series: &TrackingSeries) -> PlotData {
    PlotData::Curve(CurveData {
        title: "deformation tracking".into(),
        x_label: "time (s)".into(),
        y_label: "compression (mm)".into(),
        series: vec![CurveSeries { label: series.band.label(), points: series.times.iter().copied().zip(series.compression.iter().copied()).collect() }],
    })
}

fn beat(design: &StentDesign, scenario: &ScenarioConfig, deployed: &SolverState, out: &mut Artifacts) -> Outcome<()> {
    let frame = build_stent(design)?;
    check_state(&frame, deployed)?;
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen))?;
    let b = p.beat_cycles(deployed, &scenario.lumen, scenario.n_cycles)?;
    write_energy(&b.log.trace, out)?;
    let path = out.path("tracking.csv");
    io::write_tracking_csv(&path, &b.tracking)?;
    out.svg("tracking.svg", &tracking_plot(&b.tracking))?;
    let path = out.path("strain_history.csv");
    io::write_strain_history_csv(&path, &b.strains, scenario.extraction_cycle())?;
    out.json("beat_state.json", &b.state)?;
    out.json(
        "beat.json",
        &json!({
            "design": design.name,
            "cycles": scenario.n_cycles,
            "extraction_cycle": scenario.extraction_cycle(),
            "periodicity": b.periodicity,
            "peak_compression_mm": b.tracking.peak_compression(),
            "mean_eccentricity_index": b.tracking.mean_eccentricity(),
            "peak_anchorage_n": b.anchorage.iter().cloned().fold(0.0, f64::max),
            "steps": b.log.steps,
        }),
    )
}

fn fatigue_outputs(records: &[FatigueRecord], scenario: &ScenarioConfig, out: &mut Artifacts) -> Outcome<()> {
    let path = out.path("fatigue.csv");
    io::write_fatigue_csv(&path, records)?;
    out.json("region_report.json", &region_report(records))?;
    let regions: [(Option<Region>, &str); 4] =
        [(None, "all"), (Some(Region::Annulus), "annulus"), (Some(Region::Waist), "waist"), (Some(Region::Crown), "crown")];
    for (region, label) in regions {
        let cl = constant_life_data(records, &scenario.limits, region);
        out.svg(&format!("constant_life_{label}.svg"), &PlotData::Scatter(cl))?;
        let subset: Vec<FatigueRecord> = records.iter().filter(|r| region.map_or(true, |g| r.region == g)).copied().collect();
        let polar = polar_projection(&subset, &format!("strain amplitude, {label}"));
        out.svg(&format!("polar_{label}.svg"), &PlotData::Heat(polar))?;
    }
    Ok(())
}

fn demo(design: &StentDesign, scenario: &ScenarioConfig, out: &mut Artifacts) -> Outcome<()> {
    let t0 = std::time::Instant::now();
    let run = run_pipeline(design, scenario)?;
    let summary = summarize(&design.name, &run, scenario, t0.elapsed().as_secs_f64());
    write_energy(&run.energy_trace(), out)?;
    let path = out.path("tracking.csv");
    io::write_tracking_csv(&path, &run.beat.tracking)?;
    out.svg("tracking.svg", &tracking_plot(&run.beat.tracking))?;
    fatigue_outputs(&run.records, scenario, out)?;
    out.json("summary.json", &summary)
}

/// Sweep input file. Relative design paths resolve against the file's directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub designs: Vec<PathBuf>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
}

fn sweep(config: &Path, cli: &Cli, threads: Option<usize>, key: RankKey, out: &mut Artifacts) -> Outcome<()> {
    let cfg: SweepConfig = io::read_json(config).or_else(|e| usage("sweep config", config, e))?;
    let base = config.parent().unwrap_or(Path::new("."));
    let designs = cfg
        .designs
        .iter()
        .map(|p| load_design(&if p.is_absolute() { p.clone() } else { base.join(p) }))
        .collect::<Outcome<Vec<_>>>()?;
    let scenario = match (cfg.scenario, cli.common.scenario.is_some()) {
        (Some(s), false) => {
            s.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            s
        }
        _ => load_scenario(cli)?,
    };
    let results = run_sweep(&designs, &scenario, threads)?;
    let path = out.path("sweep.csv");
    write_sweep_csv(&path, &results)?;
    let ranked = rank_designs(&results, key);
    let path = out.path("ranking.csv");
    write_sweep_csv(&path, &ranked)?;
    for r in &ranked {
        match &r.error {
            None => println!("{:<24} failed {:.4}  anchorage {:.3} N  compression {:.3} mm", r.design_name, r.failed_fraction, r.anchorage_force, r.peak_compression),
            Some(e) => println!("{:<24} error: {e}", r.design_name),
        }
    }
    Ok(())
}

/// Writes `error.json` into the output directory; returns its path.
pub fn write_diagnostics(cli: &Cli, err: &Error) -> Option<PathBuf> {
    let kind = match err {
        Error::Validation(_) => "validation",
        Error::NonFinite(_) => "non_finite",
        Error::Blowup { .. } => "blowup",
        Error::Timeout { .. } => "timeout",
        Error::InfeasibleCrimp { .. } => "infeasible_crimp",
        Error::Deployment(_) => "deployment",
        Error::Drift(_) => "drift",
        Error::Degenerate(_) => "degenerate",
        Error::Io(_) => "io",
    };
    let trace = match err {
        Error::Timeout { trace, .. } => json!(trace),
        _ => json!(null),
    };
    let path = cli.common.out.join("error.json");
    let body = json!({
        "command": command_name(&cli.command),
        "kind": kind,
        "message": err.to_string(),
        "relaxation_trace": trace,
    });
    io::write_json(&path, &body).ok().map(|_| path)
}
