//! Crimp, radial-force, deploy and beat protocols on top of the explicit solver.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::bc::{DiameterSchedule, LumenModel, MotionProfile, SheathBC};
use crate::error::{invalid, Error, Result};
use crate::fatigue::{PointId, PointInfo};
use crate::geometry::Frame;
use crate::material::MaterialParams;
use crate::solver::{ContactState, Loads, Solver, SolverConfig, SolverState};
use crate::tracking::{Band, Tracker, TrackingSeries};

pub const FRENCH_PER_MM: f64 = 3.0;

pub fn french_to_mm(french: f64) -> f64 {
    french / FRENCH_PER_MM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub solver: SolverConfig,
    /// Sheath penalty per node, N/mm.
    pub sheath_penalty: f64,
    pub sheath_friction: f64,
    /// Sheath diameter rate while crimping or measuring radial force, mm/s.
    pub crimp_rate: f64,
    /// Sheath diameter rate while releasing, mm/s.
    pub deploy_rate: f64,
    /// Allowed node penetration into a wall at equilibrium, mm.
    pub penetration_tol: f64,
    pub samples_per_cycle: usize,
    /// Damping used during beat cycles; the quasi-static value when `None`.
    pub beat_damping: Option<f64>,
    /// Energy trace decimation, steps.
    pub trace_every: usize,
    /// Largest axial rigid drift tolerated during beat cycles, mm.
    pub drift_limit: f64,
    /// Strain floor of the periodicity metric.
    pub periodicity_floor: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            solver: SolverConfig::default(),
            sheath_penalty: 200.0,
            sheath_friction: 0.0,
            crimp_rate: 12.0,
            deploy_rate: 100.0,
            penetration_tol: 0.01,
            samples_per_cycle: 100,
            beat_damping: None,
            trace_every: 100,
            drift_limit: 5.0,
            periodicity_floor: 1e-3,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.sheath_penalty > 0.0) {
            return invalid("sheath penalty must be > 0");
        }
        if !(self.crimp_rate > 0.0 && self.deploy_rate > 0.0) {
            return invalid("sheath rates must be > 0");
        }
        if self.samples_per_cycle < 2 {
            return invalid("samples_per_cycle must be >= 2");
        }
        if self.trace_every == 0 {
            return invalid("trace_every must be >= 1");
        }
        if !(self.penetration_tol > 0.0 && self.periodicity_floor > 0.0) {
            return invalid("tolerances must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub kinetic: f64,
    pub strain: f64,
    pub external_work: f64,
    pub damping: f64,
}

/// Energy record of one protocol phase.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseLog {
    pub name: String,
    pub trace: Vec<EnergySample>,
    /// Largest KE / SE ratio seen while the strain energy exceeded the floor.
    pub max_ke_ratio: f64,
    pub max_energy_error: f64,
    pub steps: usize,
}

impl PhaseLog {
    fn new(name: &str) -> Self {
        PhaseLog { name: name.into(), ..Default::default() }
    }

    pub fn merge(&mut self, other: PhaseLog) {
        self.trace.extend(other.trace);
        self.max_ke_ratio = self.max_ke_ratio.max(other.max_ke_ratio);
        self.max_energy_error = self.max_energy_error.max(other.max_energy_error);
        self.steps += other.steps;
    }
}

/// Total radial force of a contact set: sum of normal force magnitudes, N.
pub fn anchorage_force(contact: &ContactState) -> f64 {
    contact.lumen_force()
}

/// Largest radial distance of any node from the z axis.
pub fn max_node_radius(positions: &[Vector3<f64>]) -> f64 {
    positions.iter().map(|p| p.xy().norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialForceCurve {
    pub diameters: Vec<f64>,
    pub forces: Vec<f64>,
    pub max_ke_ratio: f64,
}

/// Per-point fiber strains sampled over each beat cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainHistoryStore {
    pub points: Vec<PointInfo>,
    pub samples_per_cycle: usize,
    /// Sample times per cycle, relative to the start of beating.
    pub times: Vec<Vec<f64>>,
    /// Per cycle, sample-major: `cycles[c][k * n_points + i]`.
    pub cycles: Vec<Vec<f64>>,
}

impl StrainHistoryStore {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_cycles(&self) -> usize {
        self.cycles.len()
    }

    pub fn cycle(&self, c: usize) -> &[f64] {
        &self.cycles[c]
    }

    pub fn last_cycle(&self) -> Option<&[f64]> {
        self.cycles.last().map(|c| c.as_slice())
    }

    /// Strain history of one point over cycle `c`.
    pub fn history(&self, c: usize, point: usize) -> Vec<f64> {
        let n = self.n_points();
        self.cycles[c].chunks(n).map(|s| s[point]).collect()
    }

    /// Per-point (max, min) over cycle `c`.
    pub fn extrema(&self, c: usize) -> Vec<(f64, f64)> {
        let n = self.n_points();
        let mut out = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        for sample in self.cycles[c].chunks(n) {
            for (o, &e) in out.iter_mut().zip(sample) {
                o.0 = o.0.max(e);
                o.1 = o.1.min(e);
            }
        }
        out
    }

    /// Largest per-point change of strain extrema between cycles `a` and `b`,
    /// relative to the point's peak strain magnitude in cycle `b` (not below
    /// `floor`).
    pub fn periodicity(&self, a: usize, b: usize, floor: f64) -> f64 {
        let (ea, eb) = (self.extrema(a), self.extrema(b));
        ea.iter()
            .zip(&eb)
            .map(|(x, y)| {
                let scale = y.0.abs().max(y.1.abs()).max(floor);
                (x.0 - y.0).abs().max((x.1 - y.1).abs()) / scale
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct BeatOutcome {
    pub state: SolverState,
    pub strains: StrainHistoryStore,
    pub tracking: TrackingSeries,
    /// Lumen contact force per sample, N.
    pub anchorage: Vec<f64>,
    /// Periodicity metric between consecutive cycles (c-1, c), c = 1..
    pub periodicity: Vec<f64>,
    pub log: PhaseLog,
}

impl BeatOutcome {
    /// Metric between the last two cycles; 0 for a single cycle.
    pub fn final_periodicity(&self) -> f64 {
        self.periodicity.last().copied().unwrap_or(0.0)
    }
}

/// One frame, one material and one mass model shared by all protocol phases.
pub struct Protocol<'a> {
    pub solver: Solver<'a>,
    pub config: ProtocolConfig,
}

impl<'a> Protocol<'a> {
    /// `lumen` only sizes the contact mass; pass the lumen used for deployment.
    pub fn new(frame: &'a Frame, params: &MaterialParams, config: &ProtocolConfig, lumen: Option<&LumenModel>) -> Result<Self> {
        config.validate()?;
        let k = lumen.map_or(0.0, |l| l.wall_penalty).max(config.sheath_penalty);
        let solver = Solver::new(frame, params, &config.solver, k)?;
        Ok(Protocol { solver, config: config.clone() })
    }

    pub fn frame(&self) -> &Frame {
        self.solver.frame
    }

    /// Diameter of the smallest coaxial cylinder enclosing the free frame.
    pub fn free_outer_diameter(&self) -> f64 {
        2.0 * max_node_radius(&self.frame().nodes)
    }

    /// Integration point layout with region and undeformed (theta, z).
    pub fn point_layout(&self) -> Vec<PointInfo> {
        let frame = self.frame();
        let sites = self.solver.station_sites();
        let n_st = self.solver.stations().len();
        let ppe = self.solver.points_per_element();
        let nf = ppe / n_st;
        let mut out = Vec::with_capacity(self.solver.n_points());
        for (e, el) in frame.elements.iter().enumerate() {
            for s in 0..n_st {
                let p = sites[e * n_st + s];
                let theta = p.y.atan2(p.x).rem_euclid(2.0 * PI);
                for f in 0..nf {
                    out.push(PointInfo { id: PointId { element: e, station: s, fiber: f }, region: el.region, theta, z: p.z });
                }
            }
        }
        out
    }

    fn sheath(&self, from: f64, to: f64, t0: f64, rate: f64) -> SheathBC {
        let dur = (from - to).abs() / rate;
        SheathBC {
            schedule: DiameterSchedule { t_start: t0, t_end: t0 + dur, from, to },
            contact_penalty: self.config.sheath_penalty,
            friction_mu: self.config.sheath_friction,
        }
    }

    fn record(&self, state: &SolverState, log: &mut PhaseLog, force: bool) {
        let floor = self.config.solver.energy_floor;
        if state.strain_energy > floor {
            log.max_ke_ratio = log.max_ke_ratio.max(state.ke_ratio(floor));
            log.max_energy_error = log.max_energy_error.max(state.energy_balance_error());
        }
        if force || state.steps % self.config.trace_every == 0 {
            log.trace.push(EnergySample {
                time: state.time,
                kinetic: state.kinetic_energy,
                strain: state.strain_energy,
                external_work: state.external_work,
                damping: state.damping_dissipation,
            });
        }
    }

    /// Steps for `duration` seconds under fixed loads.
    fn advance(&self, state: &mut SolverState, loads: &Loads, duration: f64, log: &mut PhaseLog) -> Result<()> {
        let dt = self.solver.dt();
        let n = (duration / dt).ceil() as usize;
        for _ in 0..n {
            self.solver.step(state, loads, dt)?;
            log.steps += 1;
            self.record(state, log, false);
        }
        Ok(())
    }

    /// Damped stepping under fixed loads until kinetic energy has died out.
    pub fn settle(&self, state: &mut SolverState, loads: &Loads, log: &mut PhaseLog) -> Result<()> {
        let rc = self.config.solver.relax;
        let floor = self.config.solver.energy_floor;
        let mut streak = 0;
        let mut trace = Vec::new();
        for k in 0..rc.max_steps {
            self.solver.step(state, loads, self.solver.dt())?;
            log.steps += 1;
            self.record(state, log, false);
            let ratio = state.ke_ratio(floor);
            if k % 1000 == 0 {
                trace.push((state.time, state.kinetic_energy, state.strain_energy));
            }
            streak = if ratio < rc.ke_ratio_tol { streak + 1 } else { 0 };
            if streak >= rc.window && k + 1 >= rc.min_steps {
                self.record(state, log, true);
                return Ok(());
            }
        }
        Err(Error::Timeout { steps: rc.max_steps, last_ratio: state.ke_ratio(floor), trace })
    }

    /// Moves the sheath from `from` to `to` and settles there.
    fn sheath_to(&self, state: &mut SolverState, from: f64, to: f64, log: &mut PhaseLog) -> Result<()> {
        let sheath = self.sheath(from, to, state.time, self.config.crimp_rate);
        let loads = Loads { sheath: Some(&sheath), ..Default::default() };
        let ramp = sheath.schedule.t_end - state.time;
        self.advance(state, &loads, ramp, log)?;
        self.settle(state, &loads, log)
    }

    fn check_feasible(&self, target: f64) -> Result<()> {
        let frame = self.frame();
        let w = frame.sections.iter().map(|s| s.width).fold(0.0, f64::max);
        let packed = 2.0 * frame.n_cells as f64 * w;
        if packed >= PI * target {
            return Err(Error::InfeasibleCrimp {
                target,
                reason: format!("{} struts of width {w} mm need a circumference of {packed:.3} mm", 2 * frame.n_cells),
            });
        }
        Ok(())
    }

    /// Crimps the free frame into a sheath of `target_diameter`.
    pub fn crimp(&self, target_diameter: f64) -> Result<(SolverState, PhaseLog)> {
        let free = self.free_outer_diameter();
        if !(target_diameter > 0.0) || target_diameter > free + 1e-9 {
            return invalid(format!("crimp target {target_diameter} mm must lie in (0, {free:.4}] mm"));
        }
        self.check_feasible(target_diameter)?;
        let mut state = self.solver.initial_state();
        let mut log = PhaseLog::new("crimp");
        self.sheath_to(&mut state, free, target_diameter, &mut log)?;
        let half_t = self.frame().node_half_thickness().into_iter().fold(0.0, f64::max);
        let r = max_node_radius(&state.positions);
        let limit = 0.5 * target_diameter + half_t + self.config.penetration_tol;
        if r > limit {
            return Err(Error::InfeasibleCrimp {
                target: target_diameter,
                reason: format!("node radius {r:.4} mm exceeds {limit:.4} mm at equilibrium"),
            });
        }
        log::info!(
            "crimp to {target_diameter:.3} mm: {} steps, sheath force {:.3} N, max KE/SE {:.4}",
            log.steps,
            state.contact.sheath_force(),
            log.max_ke_ratio
        );
        Ok((state, log))
    }

    /// Radial force at each diameter, crimping through them in order.
    pub fn radial_force_curve(&self, diameters: &[f64]) -> Result<RadialForceCurve> {
        if diameters.is_empty() {
            return invalid("no diameters given");
        }
        if diameters.windows(2).any(|w| w[1] > w[0]) {
            return invalid("diameters must be sorted in descending order");
        }
        let free = self.free_outer_diameter();
        self.check_feasible(diameters[diameters.len() - 1])?;
        let mut state = self.solver.initial_state();
        let mut log = PhaseLog::new("radialforce");
        let mut current = free.max(diameters[0]);
        let mut forces = Vec::with_capacity(diameters.len());
        for &d in diameters {
            self.sheath_to(&mut state, current, d, &mut log)?;
            forces.push(state.contact.sheath_force());
            log::debug!("radial force at {d:.3} mm: {:.4} N", forces[forces.len() - 1]);
            current = d;
        }
        Ok(RadialForceCurve { diameters: diameters.to_vec(), forces, max_ke_ratio: log.max_ke_ratio })
    }

    /// Positions the crimped frame at `implantation_depth` below the annulus
    /// plane, opens the sheath and lets the frame settle against the lumen.
    pub fn deploy(&self, crimped: &SolverState, lumen: &LumenModel, implantation_depth: f64) -> Result<(SolverState, PhaseLog)> {
        lumen.validate()?;
        if implantation_depth < 0.0 {
            return invalid("implantation depth must be >= 0");
        }
        let mut state = crimped.clone();
        let (zlo, zhi) = state.positions.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.z), b.max(p.z)));
        let offset = lumen.annulus_z() - implantation_depth - zlo;
        let (flo, fhi) = self.frame().z_range();
        let (llo, lhi) = lumen.z_span();
        let lo = (zlo + offset).min(flo + offset);
        let hi = (zhi + offset).max(fhi + offset);
        if lo < llo || hi > lhi {
            return invalid(format!("lumen span [{llo}, {lhi}] mm does not cover the stent span [{lo:.2}, {hi:.2}] mm"));
        }
        state.translate(Vector3::new(0.0, 0.0, offset));

        let still = LumenModel { motion: MotionProfile::still(), ..lumen.clone() };
        let mut log = PhaseLog::new("deploy");
        let widest = lumen.base_radius_profile.iter().map(|p| p.1).fold(0.0, f64::max);
        let open = 2.0 * widest.max(0.5 * self.free_outer_diameter()) + 2.0;
        let from = 2.0 * max_node_radius(&state.positions);
        let sheath = self.sheath(from, open, state.time, self.config.deploy_rate);
        let loads = Loads { sheath: Some(&sheath), lumen: Some(&still), ..Default::default() };
        let ramp = sheath.schedule.t_end - state.time;
        self.advance(&mut state, &loads, ramp, &mut log)?;
        let loads = Loads { lumen: Some(&still), ..Default::default() };
        self.settle(&mut state, &loads, &mut log)?;

        let oversized = self
            .frame()
            .nodes
            .iter()
            .any(|p| p.xy().norm() > lumen.base_radius(p.z + offset));
        if oversized && anchorage_force(&state.contact) <= 0.0 {
            return Err(Error::Deployment("oversized frame has no residual wall contact".into()));
        }
        log::info!("deployed: {} steps, anchorage {:.3} N", log.steps, anchorage_force(&state.contact));
        Ok((state, log))
    }

    /// Drives the lumen through `n_cycles` periods, sampling strains and
    /// tracking metrics at `samples_per_cycle` evenly spaced instants.
    pub fn beat_cycles(&self, deployed: &SolverState, lumen: &LumenModel, n_cycles: usize) -> Result<BeatOutcome> {
        lumen.validate()?;
        if n_cycles == 0 {
            return invalid("n_cycles must be >= 1");
        }
        let spc = self.config.samples_per_cycle;
        let interval = lumen.motion.period / spc as f64;
        let sub = (interval / self.solver.dt()).ceil() as usize;
        let h = interval / sub as f64;

        let beat_solver;
        let solver = match self.config.beat_damping {
            Some(d) if d != self.config.solver.damping => {
                let mut cfg = self.config.solver;
                cfg.damping = d;
                beat_solver = Solver::new(self.solver.frame, &self.solver.params, &cfg, self.config.sheath_penalty.max(lumen.wall_penalty))?;
                &beat_solver
            }
            _ => &self.solver,
        };

        let mut state = deployed.clone();
        let clock = state.time;
        let loads = Loads { lumen: Some(lumen), lumen_clock: clock, ..Default::default() };
        let mut tracker = Tracker::new(self.frame(), &self.frame().nodes, Band::Whole)?;
        let points = self.point_layout();
        let n_points = points.len();
        let z0 = mean_z(&state.positions);
        let mut log = PhaseLog::new("beat");
        let mut store = StrainHistoryStore { points, samples_per_cycle: spc, times: Vec::new(), cycles: Vec::new() };
        let mut anchorage = Vec::with_capacity(n_cycles * spc);
        for c in 0..n_cycles {
            let mut buf = Vec::with_capacity(spc * n_points);
            let mut times = Vec::with_capacity(spc);
            for k in 1..=spc {
                for _ in 0..sub {
                    solver.step(&mut state, &loads, h)?;
                    log.steps += 1;
                    self.record(&state, &mut log, false);
                }
                // sample time from the counter, not the accumulated clock
                let t = (c * spc + k) as f64 * interval;
                buf.extend(state.fibers.iter().map(|f| f.strain));
                times.push(t);
                tracker.record(t, &state.positions)?;
                anchorage.push(anchorage_force(&state.contact));
                let drift = mean_z(&state.positions) - z0;
                if drift.abs() > self.config.drift_limit {
                    return Err(Error::Drift(format!("frame drifted {drift:.3} mm axially at t = {t:.3} s")));
                }
            }
            store.cycles.push(buf);
            store.times.push(times);
            log::info!("beat cycle {} of {n_cycles} done", c + 1);
        }
        let floor = self.config.periodicity_floor;
        let periodicity = (1..n_cycles).map(|c| store.periodicity(c - 1, c, floor)).collect();
        Ok(BeatOutcome { state, strains: store, tracking: tracker.series, anchorage, periodicity, log })
    }
}

fn mean_z(p: &[Vector3<f64>]) -> f64 {
    p.iter().map(|v| v.z).sum::<f64>() / p.len() as f64
}

/// Default lumen surrogate for a 23 mm annulus: inflow tract, annulus,
/// sinus bulge, sinotubular junction and ascending aorta.
pub fn default_lumen() -> LumenModel {
    LumenModel {
        base_radius_profile: vec![(-30.0, 12.0), (-10.0, 11.7), (0.0, 11.5), (10.0, 11.6), (20.0, 12.2), (30.0, 13.2), (40.0, 14.0), (90.0, 14.5)],
        wall_penalty: 200.0,
        tissue_stiffness: Some(0.1),
        friction_mu: 0.3,
        motion: MotionProfile { radial_amplitude: 0.28, ..Default::default() },
    }
}
