//! Strain-life screening: per-point extrema over a load cycle, mean strain and
//! amplitude, classification against a constant-life boundary and regional
//! aggregation.
//!
//! A "point" is a beam integration point (element, station, fiber), so
//! failed counts are only comparable between runs of this toolkit.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatigueLimits {
    pub amp_limit: f64,
    pub mean_limit: f64,
    /// Optional boundary polyline of (eps_mean, eps_amp) vertices with
    /// non-decreasing eps_mean; replaces the rectangular rule when present.
    #[serde(default)]
    pub curve: Option<Vec<(f64, f64)>>,
}

impl Default for FatigueLimits {
    fn default() -> Self {
        FatigueLimits { amp_limit: 0.004, mean_limit: 0.08, curve: None }
    }
}

impl FatigueLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_limit > 0.0 && self.mean_limit > 0.0) {
            return invalid("fatigue limits must be > 0");
        }
        if let Some(c) = &self.curve {
            if c.len() < 2 {
                return invalid("boundary curve needs at least 2 vertices");
            }
            if c.windows(2).any(|w| w[1].0 < w[0].0) {
                return invalid("boundary curve must be monotone in mean strain");
            }
            if c.iter().any(|v| !v.0.is_finite() || !v.1.is_finite() || v.1 < 0.0) {
                return invalid("boundary curve vertices must be finite with amplitude >= 0");
            }
        }
        Ok(())
    }

    /// The boundary as drawn on a constant-life diagram.
    pub fn boundary(&self) -> Vec<(f64, f64)> {
        match &self.curve {
            Some(c) => c.clone(),
            None => vec![(0.0, self.amp_limit), (self.mean_limit, self.amp_limit), (self.mean_limit, 0.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureMode {
    None,
    Amplitude,
    Mean,
    Both,
}

impl FailureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureMode::None => "none",
            FailureMode::Amplitude => "amplitude",
            FailureMode::Mean => "mean",
            FailureMode::Both => "both",
        }
    }

    fn from_flags(amp: bool, mean: bool) -> Self {
        match (amp, mean) {
            (false, false) => FailureMode::None,
            (true, false) => FailureMode::Amplitude,
            (false, true) => FailureMode::Mean,
            (true, true) => FailureMode::Both,
        }
    }
}

impl std::str::FromStr for FailureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FailureMode::None),
            "amplitude" => Ok(FailureMode::Amplitude),
            "mean" => Ok(FailureMode::Mean),
            "both" => Ok(FailureMode::Both),
            other => invalid(format!("unknown failure mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointId {
    pub element: usize,
    pub station: usize,
    pub fiber: usize,
}

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}s{}f{}", self.element, self.station, self.fiber)
    }
}

impl std::str::FromStr for PointId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("malformed point id {s:?}"));
        let rest = s.strip_prefix('e').ok_or_else(bad)?;
        let (e, rest) = rest.split_once('s').ok_or_else(bad)?;
        let (st, fi) = rest.split_once('f').ok_or_else(bad)?;
        Ok(PointId {
            element: e.parse().map_err(|_| bad())?,
            station: st.parse().map_err(|_| bad())?,
            fiber: fi.parse().map_err(|_| bad())?,
        })
    }
}

/// Where an integration point sits on the undeformed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointInfo {
    pub id: PointId,
    pub region: Region,
    /// Angle about the stent axis in [0, 2 pi).
    pub theta: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueRecord {
    pub point_id: PointId,
    pub region: Region,
    pub eps_mean: f64,
    pub eps_amp: f64,
    pub failed: bool,
    pub failure_mode: FailureMode,
    pub angular_pos: f64,
    pub axial_pos: f64,
}

/// Exact maximum and minimum of a strain history.
pub fn strain_extrema(history: &[f64]) -> Result<(f64, f64)> {
    if history.is_empty() {
        return Err(Error::Validation("empty strain history".into()));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &e in history {
        if !e.is_finite() {
            return Err(Error::NonFinite("strain history"));
        }
        hi = hi.max(e);
        lo = lo.min(e);
    }
    Ok((hi, lo))
}

/// Mean strain and strain amplitude of a cycle.
pub fn mean_amp(eps_max: f64, eps_min: f64) -> Result<(f64, f64)> {
    if eps_max < eps_min {
        return invalid(format!("eps_max {eps_max} < eps_min {eps_min}"));
    }
    Ok((0.5 * (eps_max + eps_min), 0.5 * (eps_max - eps_min)))
}

/// Upper envelope of the boundary polyline at mean strain `m`, or `None`
/// beyond its extent.
fn curve_amp(curve: &[(f64, f64)], m: f64) -> Option<f64> {
    let (first, last) = (curve[0].0, curve[curve.len() - 1].0);
    if m < first || m > last {
        return None;
    }
    let mut best: Option<f64> = None;
    for w in curve.windows(2) {
        let ((m0, a0), (m1, a1)) = (w[0], w[1]);
        if m < m0 || m > m1 {
            continue;
        }
        let a = if m1 == m0 { a0.max(a1) } else { a0 + (a1 - a0) * (m - m0) / (m1 - m0) };
        best = Some(best.map_or(a, |b: f64| b.max(a)));
    }
    best
}

/// Pass / fail of a (mean, amplitude) point. The absolute mean strain is used.
pub fn classify(eps_mean: f64, eps_amp: f64, limits: &FatigueLimits) -> (bool, FailureMode) {
    let m = eps_mean.abs();
    let (amp_fail, mean_fail) = match &limits.curve {
        None => (eps_amp > limits.amp_limit, m > limits.mean_limit),
        Some(c) => {
            let (lo, hi) = (c[0].0, c[c.len() - 1].0);
            let mean_fail = m > hi;
            let envelope = curve_amp(c, m.clamp(lo, hi)).unwrap_or(0.0);
            (eps_amp > envelope, mean_fail)
        }
    };
    let mode = FailureMode::from_flags(amp_fail, mean_fail);
    (mode != FailureMode::None, mode)
}

/// Largest-magnitude principal logarithmic strain of a uniaxial fiber with
/// lateral contraction ratio `nu`.
pub fn max_abs_principal(eps_axial: f64, nu: f64) -> f64 {
    let lateral = -nu * eps_axial;
    if eps_axial.abs() >= lateral.abs() {
        eps_axial
    } else {
        lateral
    }
}

/// Builds records from sample-major histories: `samples[k * n + i]` is the
/// strain of point `i` at sample `k`, with `n = points.len()`.
pub fn records_from_samples(samples: &[f64], points: &[PointInfo], limits: &FatigueLimits) -> Result<Vec<FatigueRecord>> {
    limits.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if samples.len() % n != 0 || samples.is_empty() {
        return invalid("sample buffer does not match the point layout");
    }
    let n_samples = samples.len() / n;
    let mut hist = vec![0.0; n_samples];
    let mut out = Vec::with_capacity(n);
    for (i, info) in points.iter().enumerate() {
        for k in 0..n_samples {
            hist[k] = samples[k * n + i];
        }
        let (hi, lo) = strain_extrema(&hist)?;
        let (eps_mean, eps_amp) = mean_amp(hi, lo)?;
        let (failed, failure_mode) = classify(eps_mean, eps_amp, limits);
        out.push(FatigueRecord {
            point_id: info.id,
            region: info.region,
            eps_mean,
            eps_amp,
            failed,
            failure_mode,
            angular_pos: info.theta,
            axial_pos: info.z,
        });
    }
    out.sort_by_key(|r| r.point_id);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionSummary {
    pub count: usize,
    pub failed_count: usize,
    pub max_eps_amp: f64,
    pub max_abs_eps_mean: f64,
}

/// Per-region aggregates; every region is present even when empty.
pub fn region_report(records: &[FatigueRecord]) -> BTreeMap<Region, RegionSummary> {
    let mut out: BTreeMap<Region, RegionSummary> = Region::ALL.iter().map(|&r| (r, RegionSummary::default())).collect();
    for r in records {
        let s = out.entry(r.region).or_default();
        s.count += 1;
        s.failed_count += r.failed as usize;
        s.max_eps_amp = s.max_eps_amp.max(r.eps_amp);
        s.max_abs_eps_mean = s.max_abs_eps_mean.max(r.eps_mean.abs());
    }
    out
}

pub fn failed_fraction(records: &[FatigueRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.failed).count() as f64 / records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifePoint {
    pub eps_mean: f64,
    pub eps_amp: f64,
    pub failed: bool,
}

/// Scatter of (mean, amplitude) with the failure boundary overlaid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLifeData {
    pub title: String,
    pub points: Vec<LifePoint>,
    pub boundary: Vec<(f64, f64)>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = (hi - lo).max(1e-6);
    (lo - 0.1 * span, hi + 0.1 * span)
}

/// Constant-life dataset for one region (or all records with `None`).
/// Axes cover data and boundary with at least 10% margin on each side.
pub fn constant_life_data(records: &[FatigueRecord], limits: &FatigueLimits, region: Option<Region>) -> ConstantLifeData {
    let points: Vec<LifePoint> = records
        .iter()
        .filter(|r| region.map_or(true, |g| r.region == g))
        .map(|r| LifePoint { eps_mean: r.eps_mean, eps_amp: r.eps_amp, failed: r.failed })
        .collect();
    let boundary = limits.boundary();
    let xs = points.iter().map(|p| p.eps_mean).chain(boundary.iter().map(|b| b.0)).chain([0.0]);
    let ys = points.iter().map(|p| p.eps_amp).chain(boundary.iter().map(|b| b.1)).chain([0.0]);
    let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (ylo, yhi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    ConstantLifeData {
        title: match region {
            Some(r) => format!("constant-life diagram, {r}"),
            None => "constant-life diagram".into(),
        },
        points,
        boundary,
        x_range: padded(xlo, xhi),
        y_range: padded(ylo, yhi),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub theta: f64,
    pub z: f64,
    pub eps_amp: f64,
}

/// Unrolled (theta, z) map of strain amplitude, one point per
/// (element, station) site holding the largest fiber amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarData {
    pub title: String,
    pub points: Vec<PolarPoint>,
    pub theta_range: (f64, f64),
    pub z_range: (f64, f64),
    pub max_amp: f64,
}

pub fn polar_projection(records: &[FatigueRecord], title: &str) -> PolarData {
    let mut sites: BTreeMap<(usize, usize), PolarPoint> = BTreeMap::new();
    for r in records {
        let key = (r.point_id.element, r.point_id.station);
        let theta = r.angular_pos.rem_euclid(2.0 * PI);
        let e = sites.entry(key).or_insert(PolarPoint { theta, z: r.axial_pos, eps_amp: r.eps_amp });
        e.eps_amp = e.eps_amp.max(r.eps_amp);
    }
    let points: Vec<PolarPoint> = sites.into_values().collect();
    let (zlo, zhi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.z), b.max(p.z)));
    let z_range = if points.is_empty() { (0.0, 1.0) } else { padded(zlo, zhi) };
    PolarData {
        title: title.to_string(),
        max_amp: points.iter().map(|p| p.eps_amp).fold(0.0, f64::max),
        points,
        theta_range: (0.0, 2.0 * PI),
        z_range,
    }
}
