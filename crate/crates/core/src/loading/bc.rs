use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Diameter ramp between two times with zero rate at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub from: f64,
    pub to: f64,
}

impl DiameterSchedule {
    pub fn hold(diameter: f64) -> Self {
        DiameterSchedule { t_start: 0.0, t_end: 0.0, from: diameter, to: diameter }
    }

    pub fn diameter(&self, t: f64) -> f64 {
        if t <= self.t_start {
            return self.from;
        }
        if t >= self.t_end {
            return self.to;
        }
        let s = (t - self.t_start) / (self.t_end - self.t_start);
        let w = s * s * (3.0 - 2.0 * s);
        self.from + w * (self.to - self.from)
    }
}

/// Rigid cylindrical crimping sheath coaxial with the stent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheathBC {
    pub schedule: DiameterSchedule,
    /// Penalty stiffness per node, N/mm.
    pub contact_penalty: f64,
    pub friction_mu: f64,
}

impl SheathBC {
    pub fn current_diameter(&self, t: f64) -> f64 {
        self.schedule.diameter(t)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.from > 0.0 && s.to > 0.0) {
            return invalid("sheath diameter must be > 0");
        }
        if !(self.contact_penalty > 0.0) {
            return invalid("sheath penalty must be > 0");
        }
        if self.friction_mu < 0.0 {
            return invalid("friction coefficient must be >= 0");
        }
        Ok(())
    }
}

/// Periodic wall motion of the lumen surrogate:
/// `r = R0(z) * (1 - w(t) g(z) (a0 + a2 cos(2 theta - phase)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub period: f64,
    pub peak_time: f64,
    pub radial_amplitude: f64,
    pub ovalization_amplitude: f64,
    #[serde(default)]
    pub ovalization_phase: f64,
    /// (z mm, scale) control points for g(z); empty means uniform.
    #[serde(default)]
    pub axial_variation: Vec<(f64, f64)>,
}

impl Default for MotionProfile {
    fn default() -> Self {
        MotionProfile {
            period: 1.0,
            peak_time: 0.32,
            radial_amplitude: 0.0,
            ovalization_amplitude: 0.1,
            ovalization_phase: 0.0,
            axial_variation: Vec::new(),
        }
    }
}

impl MotionProfile {
    pub fn still() -> Self {
        MotionProfile {
            radial_amplitude: 0.0,
            ovalization_amplitude: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return invalid("motion period must be > 0");
        }
        if !(self.peak_time >= 0.0 && self.peak_time < self.period) {
            return invalid("peak_time must lie in [0, period)");
        }
        let gmax = self.axial_variation.iter().map(|p| p.1.abs()).fold(1.0f64, f64::max);
        let gmax = if self.axial_variation.is_empty() { 1.0 } else { gmax };
        if gmax * (self.radial_amplitude.abs() + self.ovalization_amplitude.abs()) >= 1.0 {
            return invalid("motion amplitudes would collapse the lumen radius");
        }
        if self.axial_variation.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("axial_variation z values must increase");
        }
        Ok(())
    }

    /// Raised-cosine pulse in [0, 1] peaking at `peak_time`; C¹ and periodic.
    pub fn waveform(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        if tau < self.peak_time {
            0.5 * (1.0 - (PI * tau / self.peak_time).cos())
        } else {
            0.5 * (1.0 + (PI * (tau - self.peak_time) / (self.period - self.peak_time)).cos())
        }
    }

    pub fn axial_scale(&self, z: f64) -> f64 {
        if self.axial_variation.is_empty() {
            1.0
        } else {
            piecewise_linear(&self.axial_variation, z)
        }
    }

    pub fn factor(&self, theta: f64, z: f64, t: f64) -> f64 {
        let amp = self.waveform(t) * self.axial_scale(z);
        1.0 - amp * (self.radial_amplitude + self.ovalization_amplitude * (2.0 * theta - self.ovalization_phase).cos())
    }
}

pub(crate) fn piecewise_linear(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (a, b) = (points[i - 1], points[i]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Moving lumen surrogate. The wall is a radius profile along z, driven by a
/// [`MotionProfile`], backed by an optional per-node elastic foundation that
/// stands in for tissue compliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LumenModel {
    /// (z mm, radius mm) control points, z increasing.
    pub base_radius_profile: Vec<(f64, f64)>,
    /// Contact penalty per node, N/mm.
    pub wall_penalty: f64,
    /// Foundation stiffness per node, N/mm. `None` means a rigid wall.
    #[serde(default)]
    pub tissue_stiffness: Option<f64>,
    pub friction_mu: f64,
    pub motion: MotionProfile,
}

impl LumenModel {
    pub fn validate(&self) -> Result<()> {
        if self.base_radius_profile.len() < 2 {
            return invalid("lumen profile needs at least two control points");
        }
        if self.base_radius_profile.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("lumen profile z values must increase");
        }
        if self.base_radius_profile.iter().any(|p| !(p.1 > 0.0)) {
            return invalid("lumen radii must be > 0");
        }
        if !(self.wall_penalty > 0.0) {
            return invalid("wall penalty must be > 0");
        }
        if let Some(k) = self.tissue_stiffness {
            if !(k > 0.0) {
                return invalid("tissue stiffness must be > 0");
            }
        }
        if self.friction_mu < 0.0 {
            return invalid("friction coefficient must be >= 0");
        }
        self.motion.validate()
    }

    pub fn base_radius(&self, z: f64) -> f64 {
        piecewise_linear(&self.base_radius_profile, z)
    }

    pub fn radius(&self, theta: f64, z: f64, t: f64) -> f64 {
        self.base_radius(z) * self.motion.factor(theta, z, t)
    }

    pub fn z_span(&self) -> (f64, f64) {
        (self.base_radius_profile[0].0, self.base_radius_profile[self.base_radius_profile.len() - 1].0)
    }

    /// Axial position of the narrowest control point (the annulus plane).
    pub fn annulus_z(&self) -> f64 {
        self.base_radius_profile
            .iter()
            .fold((f64::INFINITY, 0.0), |best, p| if p.1 < best.0 { (p.1, p.0) } else { best })
            .1
    }

    /// Series combination of contact penalty and foundation stiffness.
    pub fn effective_stiffness(&self) -> f64 {
        match self.tissue_stiffness {
            Some(k) => 1.0 / (1.0 / self.wall_penalty + 1.0 / k),
            None => self.wall_penalty,
        }
    }
}

/// Per-node contact record for one surface.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeContact {
    /// Normal force magnitude, N.
    pub normal_force: f64,
    /// Interpenetration of node and wall surface, mm.
    pub penetration: f64,
    pub force: Vector3<f64>,
    pub anchor: Option<Vector3<f64>>,
}

/// Node-to-cylinder penalty contact with radial normal and elastic-stick
/// Coulomb friction. The node must stay inside `radius`.
pub(crate) fn radial_contact(
    x: &Vector3<f64>,
    radius: f64,
    k_eff: f64,
    k_pen: f64,
    mu: f64,
    slot: &mut NodeContact,
) -> Vector3<f64> {
    let r = x.xy().norm();
    let gap = r - radius;
    if gap <= 0.0 || r < 1e-12 {
        *slot = NodeContact::default();
        return Vector3::zeros();
    }
    let er = Vector3::new(x.x / r, x.y / r, 0.0);
    let fn_mag = k_eff * gap;
    let mut force = -fn_mag * er;
    if mu > 0.0 {
        let anchor = slot.anchor.unwrap_or(*x);
        let slip = x - anchor;
        let slip_t = slip - slip.dot(&er) * er;
        let trial = -k_eff * slip_t;
        let cap = mu * fn_mag;
        let tn = trial.norm();
        if tn > cap {
            let dir = slip_t / slip_t.norm();
            force -= cap * dir;
            slot.anchor = Some(x - (cap / k_eff) * dir);
        } else {
            force += trial;
            slot.anchor = Some(anchor);
        }
    }
    slot.normal_force = fn_mag;
    slot.penetration = fn_mag / k_pen;
    slot.force = force;
    force
}
