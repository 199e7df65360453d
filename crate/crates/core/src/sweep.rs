//! Full crimp, deploy, beat and fatigue pipeline per design, and a batch
//! harness that runs designs as independent jobs and ranks them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fatigue::{failed_fraction, records_from_samples, region_report, FatigueLimits, FatigueRecord, RegionSummary};
use crate::geometry::{build_stent, Frame, Region, StentDesign};
use crate::loading::scenarios::{anchorage_force, default_lumen, french_to_mm, BeatOutcome, PhaseLog, Protocol, ProtocolConfig};
use crate::loading::LumenModel;
use crate::material::MaterialParams;
use crate::solver::SolverState;

/// Shared scenario applied to every design of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub material: MaterialParams,
    pub protocol: ProtocolConfig,
    pub crimp_french: f64,
    pub lumen: LumenModel,
    /// Axial distance from the annulus plane to the stent inflow end, mm.
    pub implantation_depth: f64,
    pub n_cycles: usize,
    /// Cycle (0-based) whose strains feed the fatigue analysis; last when `None`.
    pub extraction_cycle: Option<usize>,
    pub limits: FatigueLimits,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            material: MaterialParams::default(),
            protocol: ProtocolConfig::default(),
            crimp_french: 16.0,
            lumen: default_lumen(),
            implantation_depth: 4.0,
            n_cycles: 3,
            extraction_cycle: None,
            limits: FatigueLimits::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.protocol.validate()?;
        self.lumen.validate()?;
        self.limits.validate()?;
        if !(self.crimp_french > 0.0) {
            return invalid("crimp size must be > 0");
        }
        if self.n_cycles == 0 {
            return invalid("n_cycles must be >= 1");
        }
        if let Some(c) = self.extraction_cycle {
            if c >= self.n_cycles {
                return invalid(format!("extraction cycle {c} beyond {} cycles", self.n_cycles));
            }
        }
        Ok(())
    }

    pub fn extraction_cycle(&self) -> usize {
        self.extraction_cycle.unwrap_or(self.n_cycles - 1)
    }
}

/// Everything produced by one pipeline run.
pub struct PipelineOutput {
    pub frame: Frame,
    pub crimped: SolverState,
    pub deployed: SolverState,
    pub crimp_log: PhaseLog,
    pub deploy_log: PhaseLog,
    pub beat: BeatOutcome,
    pub records: Vec<FatigueRecord>,
    pub deployed_anchorage: f64,
    pub added_mass_fraction: f64,
}

impl PipelineOutput {
    /// Concatenated energy trace of all phases.
    pub fn energy_trace(&self) -> Vec<crate::loading::EnergySample> {
        let mut t = self.crimp_log.trace.clone();
        t.extend(self.deploy_log.trace.iter().copied());
        t.extend(self.beat.log.trace.iter().copied());
        t
    }
}

/// Fatigue records of one cycle of a beat run.
pub fn extract_records(beat: &BeatOutcome, cycle: usize, limits: &FatigueLimits) -> Result<Vec<FatigueRecord>> {
    if cycle >= beat.strains.n_cycles() {
        return invalid(format!("cycle {cycle} not recorded"));
    }
    records_from_samples(beat.strains.cycle(cycle), &beat.strains.points, limits)
}

pub fn run_pipeline(design: &StentDesign, scenario: &ScenarioConfig) -> Result<PipelineOutput> {
    scenario.validate()?;
    let frame = build_stent(design)?;
    let (crimped, crimp_log, deployed, deploy_log, beat, added) = {
        let proto = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen))?;
        let (crimped, crimp_log) = proto.crimp(french_to_mm(scenario.crimp_french))?;
        let (deployed, deploy_log) = proto.deploy(&crimped, &scenario.lumen, scenario.implantation_depth)?;
        let beat = proto.beat_cycles(&deployed, &scenario.lumen, scenario.n_cycles)?;
        (crimped, crimp_log, deployed, deploy_log, beat, proto.solver.added_mass_fraction())
    };
    let records = extract_records(&beat, scenario.extraction_cycle(), &scenario.limits)?;
    let deployed_anchorage = anchorage_force(&deployed.contact);
    Ok(PipelineOutput {
        frame,
        crimped,
        deployed,
        crimp_log,
        deploy_log,
        beat,
        records,
        deployed_anchorage,
        added_mass_fraction: added,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub design_name: String,
    /// Lumen contact force after deployment, N.
    pub anchorage_force: f64,
    /// Largest lumen contact force over the extraction cycle, N.
    pub peak_anchorage_force: f64,
    /// Largest compression over the extraction cycle, mm.
    pub peak_compression: f64,
    /// Mean eccentricity index over the extraction cycle.
    pub mean_ei: f64,
    pub failed_counts: BTreeMap<Region, usize>,
    pub point_count: usize,
    pub failed_fraction: f64,
    pub periodicity: f64,
    pub steps: usize,
    pub added_mass_fraction: f64,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl SweepResult {
    fn failed(design_name: &str, err: &Error, wall: f64) -> Self {
        SweepResult {
            design_name: design_name.to_string(),
            anchorage_force: f64::NAN,
            peak_anchorage_force: f64::NAN,
            peak_compression: f64::NAN,
            mean_ei: f64::NAN,
            failed_counts: Region::ALL.iter().map(|&r| (r, 0)).collect(),
            point_count: 0,
            failed_fraction: f64::NAN,
            periodicity: f64::NAN,
            steps: 0,
            added_mass_fraction: f64::NAN,
            wall_time_s: wall,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Copy with the wall-clock time cleared, for reproducibility checks.
    pub fn without_timing(&self) -> SweepResult {
        SweepResult { wall_time_s: 0.0, ..self.clone() }
    }
}

/// Summary row of a finished pipeline.
pub fn summarize(design_name: &str, out: &PipelineOutput, scenario: &ScenarioConfig, wall: f64) -> SweepResult {
    let cycle = scenario.extraction_cycle();
    let spc = out.beat.strains.samples_per_cycle;
    let window = cycle * spc..(cycle + 1) * spc;
    let tr = &out.beat.tracking;
    let comp = &tr.compression[window.clone()];
    let ei = &tr.eccentricity_index[window.clone()];
    let report: BTreeMap<Region, RegionSummary> = region_report(&out.records);
    SweepResult {
        design_name: design_name.to_string(),
        anchorage_force: out.deployed_anchorage,
        peak_anchorage_force: out.beat.anchorage[window].iter().cloned().fold(0.0, f64::max),
        peak_compression: comp.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_ei: ei.iter().sum::<f64>() / ei.len() as f64,
        failed_counts: report.iter().map(|(r, s)| (*r, s.failed_count)).collect(),
        point_count: out.records.len(),
        failed_fraction: failed_fraction(&out.records),
        periodicity: out.beat.final_periodicity(),
        steps: out.crimp_log.steps + out.deploy_log.steps + out.beat.log.steps,
        added_mass_fraction: out.added_mass_fraction,
        wall_time_s: wall,
        error: None,
    }
}

fn run_one(design: &StentDesign, scenario: &ScenarioConfig) -> SweepResult {
    let t0 = Instant::now();
    log::info!("sweep: starting {}", design.name);
    match run_pipeline(design, scenario) {
        Ok(out) => summarize(&design.name, &out, scenario, t0.elapsed().as_secs_f64()),
        Err(e) => SweepResult::failed(&design.name, &e, t0.elapsed().as_secs_f64()),
    }
}

/// Runs every design through the same pipeline. Designs run as parallel jobs
/// on `threads` workers (rayon's default when `None`); result order follows
/// the input and each run is sequential, so results do not depend on the
/// degree of parallelism. A failing design yields a row with `error` set.
pub fn run_sweep(designs: &[StentDesign], scenario: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<SweepResult>> {
    let job = || designs.par_iter().map(|d| run_one(d, scenario)).collect::<Vec<_>>();
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    /// Fewest failing points first.
    FailedFraction,
    /// Largest anchorage first.
    Anchorage,
    /// Least compression first.
    Compression,
}

impl std::str::FromStr for RankKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "failed_fraction" => Ok(RankKey::FailedFraction),
            "anchorage" => Ok(RankKey::Anchorage),
            "compression" => Ok(RankKey::Compression),
            other => invalid(format!("unknown rank key {other:?}")),
        }
    }
}

/// Stable ordering by `key`, ties broken by design name; failed runs last.
pub fn rank_designs(results: &[SweepResult], key: RankKey) -> Vec<SweepResult> {
    let value = |r: &SweepResult| match key {
        RankKey::FailedFraction => r.failed_fraction,
        RankKey::Anchorage => -r.anchorage_force,
        RankKey::Compression => r.peak_compression,
    };
    let mut out = results.to_vec();
    out.sort_by(|a, b| {
        let bad = |r: &SweepResult| !r.is_ok() || value(r).is_nan();
        bad(a)
            .cmp(&bad(b))
            .then_with(|| value(a).partial_cmp(&value(b)).unwrap_or(Ordering::Equal))
            .then_with(|| a.design_name.cmp(&b.design_name))
    });
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    design: String,
    anchorage_n: f64,
    peak_anchorage_n: f64,
    peak_compression_mm: f64,
    mean_ei: f64,
    failed_annulus: usize,
    failed_waist: usize,
    failed_crown: usize,
    points: usize,
    failed_fraction: f64,
    periodicity: f64,
    steps: usize,
    added_mass_fraction: f64,
    wall_time_s: f64,
    error: String,
}

pub fn write_sweep_csv(path: &std::path::Path, results: &[SweepResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(SweepRow {
            design: r.design_name.clone(),
            anchorage_n: r.anchorage_force,
            peak_anchorage_n: r.peak_anchorage_force,
            peak_compression_mm: r.peak_compression,
            mean_ei: r.mean_ei,
            failed_annulus: r.failed_counts.get(&Region::Annulus).copied().unwrap_or(0),
            failed_waist: r.failed_counts.get(&Region::Waist).copied().unwrap_or(0),
            failed_crown: r.failed_counts.get(&Region::Crown).copied().unwrap_or(0),
            points: r.point_count,
            failed_fraction: r.failed_fraction,
            periodicity: r.periodicity,
            steps: r.steps,
            added_mass_fraction: r.added_mass_fraction,
            wall_time_s: r.wall_time_s,
            error: r.error.clone().unwrap_or_default(),
        })?;
    }
    w.flush()?;
    Ok(())
}
