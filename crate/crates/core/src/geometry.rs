//! Parametric diamond-cell stent frames.
//!
//! A frame is a lattice of node rings stacked along +z. Ring `k` carries
//! `n_cells` apex nodes; odd rings are rotated by half a cell so that the
//! struts between two rings form a zig-zag. A closed diamond spans two
//! consecutive strut rows, so the axial gap between ring `k` and `k + 1` is
//! `row_heights[k] / 2`. Each strut is a helical segment on the (possibly
//! conical) surface between its two apex rings, subdivided into straight
//! beam elements.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Plausible wall thickness window for laser-cut nitinol frames, mm.
pub const DEFAULT_THICKNESS_RANGE: (f64, f64) = (0.1, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Annulus,
    Waist,
    Crown,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Annulus, Region::Waist, Region::Crown];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Annulus => "annulus",
            Region::Waist => "waist",
            Region::Crown => "crown",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annulus" => Ok(Region::Annulus),
            "waist" => Ok(Region::Waist),
            "crown" => Ok(Region::Crown),
            other => invalid(format!("unknown region '{other}'")),
        }
    }
}

/// Normalized axial intervals (0 = inflow, 1 = outflow) for the three regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBands {
    pub annulus: [f64; 2],
    pub waist: [f64; 2],
    pub crown: [f64; 2],
}

impl Default for RegionBands {
    fn default() -> Self {
        RegionBands {
            annulus: [0.0, 0.30],
            waist: [0.30, 0.70],
            crown: [0.70, 1.0],
        }
    }
}

impl RegionBands {
    pub fn validate(&self) -> Result<()> {
        let bands = [self.annulus, self.waist, self.crown];
        if bands.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("region_bands: non-finite bound");
        }
        if self.annulus[0] != 0.0 || self.crown[1] != 1.0 {
            return invalid("region_bands must start at 0 and end at 1");
        }
        if self.annulus[1] != self.waist[0] || self.waist[1] != self.crown[0] {
            return invalid("region_bands must be contiguous (no gap, no overlap)");
        }
        if bands.iter().any(|b| b[1] <= b[0]) {
            return invalid("region_bands intervals must have positive length");
        }
        Ok(())
    }

    /// Region of a normalized axial coordinate `s` in [0, 1].
    pub fn classify(&self, s: f64) -> Region {
        if s < self.annulus[1] {
            Region::Annulus
        } else if s < self.waist[1] {
            Region::Waist
        } else {
            Region::Crown
        }
    }
}

/// Wall thickness over a half-open circumferential fraction range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessBand {
    pub from: f64,
    pub to: f64,
    pub thickness: f64,
}

pub type ThicknessProfile = Vec<ThicknessBand>;

/// Checks that the bands tile [0, 1) in order with positive thicknesses.
pub fn validate_thickness_profile(profile: &[ThicknessBand]) -> Result<()> {
    if profile.is_empty() {
        return invalid("thickness_profile is empty");
    }
    let mut cursor = 0.0;
    for band in profile {
        if band.from != cursor {
            return invalid(format!(
                "thickness_profile has a gap or overlap at fraction {cursor} (next band starts at {})",
                band.from
            ));
        }
        if !(band.to > band.from) {
            return invalid(format!("thickness band [{}, {}) is empty", band.from, band.to));
        }
        if !(band.thickness > 0.0) || !band.thickness.is_finite() {
            return invalid(format!("thickness must be > 0, got {}", band.thickness));
        }
        cursor = band.to;
    }
    if cursor != 1.0 {
        return invalid(format!("thickness_profile ends at {cursor}, must cover [0, 1)"));
    }
    Ok(())
}

fn thickness_at(profile: &[ThicknessBand], fraction: f64) -> f64 {
    let f = fraction.rem_euclid(1.0);
    profile
        .iter()
        .find(|b| f >= b.from && f < b.to)
        .unwrap_or(&profile[profile.len() - 1])
        .thickness
}

fn default_elements_per_strut() -> usize {
    4
}

/// Parametric description of a diamond-cell stent frame. Lengths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StentDesign {
    pub name: String,
    /// Diamond cells around the circumference.
    pub n_cells: usize,
    /// Strut rows along the axis; there are `n_rows + 1` node rings.
    pub n_rows: usize,
    /// Centerline diameter of each node ring, inflow to outflow.
    pub ring_diameters: Vec<f64>,
    /// Cell height associated with each strut row (ring gap is half of it).
    pub row_heights: Vec<f64>,
    pub strut_width: f64,
    pub thickness_profile: ThicknessProfile,
    #[serde(default)]
    pub region_bands: RegionBands,
    #[serde(default = "default_elements_per_strut")]
    pub elements_per_strut: usize,
}

const COREVALVE26_JSON: &str = include_str!("../data/designs/corevalve26-like.json");
const EVOLUT26_JSON: &str = include_str!("../data/designs/evolut26-like.json");
const POLYV2_JSON: &str = include_str!("../data/designs/polyv2-like.json");

impl StentDesign {
    /// Surrogate for a 26-mm first-generation self-expanding frame.
    /// Dimensions are plausible envelope values, not commercial geometry.
    pub fn corevalve26_like() -> Self {
        serde_json::from_str(COREVALVE26_JSON).expect("bundled design parses")
    }

    /// Surrogate for a 26-mm later-generation frame with a lower profile.
    pub fn evolut26_like() -> Self {
        serde_json::from_str(EVOLUT26_JSON).expect("bundled design parses")
    }

    /// Surrogate for a strain-optimized frame: more cells, shorter bending arms.
    pub fn polyv2_like() -> Self {
        serde_json::from_str(POLYV2_JSON).expect("bundled design parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: StentDesign = serde_json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(DEFAULT_THICKNESS_RANGE)
    }

    pub fn validate_with(&self, thickness_range: (f64, f64)) -> Result<()> {
        if self.name.trim().is_empty() {
            return invalid("name must not be empty");
        }
        if self.n_cells < 3 {
            return invalid(format!("n_cells must be >= 3, got {}", self.n_cells));
        }
        if self.n_rows < 1 {
            return invalid(format!("n_rows must be >= 1, got {}", self.n_rows));
        }
        if self.ring_diameters.len() != self.n_rows + 1 {
            return invalid(format!(
                "ring_diameters needs n_rows + 1 = {} entries, got {}",
                self.n_rows + 1,
                self.ring_diameters.len()
            ));
        }
        if self.row_heights.len() != self.n_rows {
            return invalid(format!(
                "row_heights needs n_rows = {} entries, got {}",
                self.n_rows,
                self.row_heights.len()
            ));
        }
        for (label, values) in [("ring_diameters", &self.ring_diameters), ("row_heights", &self.row_heights)] {
            if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return invalid(format!("{label}: every dimension must be > 0, got {v}"));
            }
        }
        if !(self.strut_width > 0.0) || !self.strut_width.is_finite() {
            return invalid(format!("strut_width must be > 0, got {}", self.strut_width));
        }
        if self.elements_per_strut < 1 {
            return invalid("elements_per_strut must be >= 1");
        }
        validate_thickness_profile(&self.thickness_profile)?;
        let (lo, hi) = thickness_range;
        if let Some(b) = self
            .thickness_profile
            .iter()
            .find(|b| b.thickness < lo || b.thickness > hi)
        {
            return invalid(format!(
                "thickness {} mm outside plausible range [{lo}, {hi}] mm",
                b.thickness
            ));
        }
        self.region_bands.validate()
    }

    pub fn free_diameter(&self) -> f64 {
        self.ring_diameters.iter().cloned().fold(0.0, f64::max)
    }

    pub fn length(&self) -> f64 {
        self.row_heights.iter().sum::<f64>() / 2.0
    }
}

/// Returns a copy with the strut width multiplied by `factor` and the name
/// suffixed in the `-C` / `-20I` / `-20D` style.
pub fn scale_strut_width(design: &StentDesign, factor: f64) -> Result<StentDesign> {
    if !(factor > 0.0) || !factor.is_finite() {
        return invalid(format!("width factor must be > 0, got {factor}"));
    }
    let pct = ((factor - 1.0) * 100.0).round() as i64;
    let suffix = match pct {
        0 => "-C".to_string(),
        p if p > 0 => format!("-{p}I"),
        p => format!("-{}D", -p),
    };
    let mut out = design.clone();
    out.strut_width = design.strut_width * factor;
    out.name = format!("{}{}", design.name, suffix);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub width: f64,
    pub thickness: f64,
}

impl Section {
    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub nodes: [usize; 2],
    pub section: usize,
    pub region: Region,
    pub strut: usize,
}

/// Cylindrical end coordinates (r, theta, z) of a strut; theta is unwrapped
/// so that `ends[1].1 - ends[0].1` is the signed angular span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strut {
    pub row: usize,
    pub apex: [usize; 2],
    pub ends: [(f64, f64, f64); 2],
    pub first_element: usize,
    pub n_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub name: String,
    pub n_cells: usize,
    pub nodes: Vec<Vector3<f64>>,
    pub elements: Vec<Element>,
    pub sections: Vec<Section>,
    pub axis: Vector3<f64>,
    /// Apex node ids per ring, inflow to outflow.
    pub rings: Vec<Vec<usize>>,
    pub struts: Vec<Strut>,
}

pub fn build_stent(design: &StentDesign) -> Result<Frame> {
    design.validate()?;
    let n = design.n_cells;
    let half_cell = PI / n as f64;

    let mut ring_z = Vec::with_capacity(design.n_rows + 1);
    let mut z = 0.0;
    ring_z.push(z);
    for h in &design.row_heights {
        z += h / 2.0;
        ring_z.push(z);
    }

    let mut nodes = Vec::new();
    let mut rings = Vec::new();
    let apex_theta = |k: usize, j: usize| 2.0 * PI * j as f64 / n as f64 + (k % 2) as f64 * half_cell;
    for (k, (&d, &zk)) in design.ring_diameters.iter().zip(&ring_z).enumerate() {
        let r = d / 2.0;
        let mut ring = Vec::with_capacity(n);
        for j in 0..n {
            let th = apex_theta(k, j);
            ring.push(nodes.len());
            nodes.push(Vector3::new(r * th.cos(), r * th.sin(), zk));
        }
        rings.push(ring);
    }

    let m = design.elements_per_strut;
    let mut struts = Vec::new();
    let mut elements = Vec::new();
    for k in 0..design.n_rows {
        let (ra, rb) = (design.ring_diameters[k] / 2.0, design.ring_diameters[k + 1] / 2.0);
        for j in 0..n {
            // (target apex index in ring k+1, signed angular span)
            let targets = if k % 2 == 0 {
                [(j, half_cell), ((j + n - 1) % n, -half_cell)]
            } else {
                [((j + 1) % n, half_cell), (j, -half_cell)]
            };
            for (jb, span) in targets {
                let ta = apex_theta(k, j);
                let a = rings[k][j];
                let b = rings[k + 1][jb];
                let strut_id = struts.len();
                let first_element = elements.len();
                let mut prev = a;
                for i in 1..=m {
                    let next = if i == m {
                        b
                    } else {
                        let s = i as f64 / m as f64;
                        let r = ra + s * (rb - ra);
                        let th = ta + s * span;
                        let zz = ring_z[k] + s * (ring_z[k + 1] - ring_z[k]);
                        nodes.push(Vector3::new(r * th.cos(), r * th.sin(), zz));
                        nodes.len() - 1
                    };
                    elements.push(Element {
                        nodes: [prev, next],
                        section: 0,
                        region: Region::Annulus,
                        strut: strut_id,
                    });
                    prev = next;
                }
                struts.push(Strut {
                    row: k,
                    apex: [a, b],
                    ends: [(ra, ta, ring_z[k]), (rb, ta + span, ring_z[k + 1])],
                    first_element,
                    n_elements: m,
                });
            }
        }
    }

    let (z0, z1) = (ring_z[0], *ring_z.last().unwrap());
    for e in &mut elements {
        let mid = 0.5 * (nodes[e.nodes[0]] + nodes[e.nodes[1]]);
        e.region = design.region_bands.classify((mid.z - z0) / (z1 - z0));
    }

    let frame = Frame {
        name: design.name.clone(),
        n_cells: n,
        nodes,
        elements,
        sections: vec![Section {
            width: design.strut_width,
            thickness: design.thickness_profile[0].thickness,
        }],
        axis: Vector3::z(),
        rings,
        struts,
    };
    assign_thickness(&frame, &design.thickness_profile)
}

/// Sets every element's section thickness from the circumferential fraction
/// of its midpoint. Section widths are preserved.
pub fn assign_thickness(frame: &Frame, profile: &[ThicknessBand]) -> Result<Frame> {
    validate_thickness_profile(profile)?;
    let mut out = frame.clone();
    let mut lookup: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut sections = Vec::new();
    for e in &mut out.elements {
        let mid = 0.5 * (frame.nodes[e.nodes[0]] + frame.nodes[e.nodes[1]]);
        let frac = mid.y.atan2(mid.x).rem_euclid(2.0 * PI) / (2.0 * PI);
        let width = frame.sections[e.section].width;
        let t = thickness_at(profile, frac);
        let key = (width.to_bits(), t.to_bits());
        e.section = *lookup.entry(key).or_insert_with(|| {
            sections.push(Section { width, thickness: t });
            sections.len() - 1
        });
    }
    out.sections = sections;
    Ok(out)
}

impl Frame {
    /// Straight beam along +x from the origin, one section, all elements
    /// tagged as annulus. Used for verification problems.
    pub fn straight_beam(n_elements: usize, length: f64, section: Section) -> Result<Frame> {
        if n_elements == 0 || !(length > 0.0) {
            return invalid("straight beam needs >= 1 element and positive length");
        }
        let h = length / n_elements as f64;
        Ok(Frame {
            name: "beam".into(),
            n_cells: 0,
            nodes: (0..=n_elements).map(|i| Vector3::new(i as f64 * h, 0.0, 0.0)).collect(),
            elements: (0..n_elements)
                .map(|i| Element { nodes: [i, i + 1], section: 0, region: Region::Annulus, strut: 0 })
                .collect(),
            sections: vec![section],
            axis: Vector3::z(),
            rings: Vec::new(),
            struts: Vec::new(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        let [a, b] = self.elements[e].nodes;
        (self.nodes[b] - self.nodes[a]).norm()
    }

    pub fn element_midpoint(&self, e: usize) -> Vector3<f64> {
        let [a, b] = self.elements[e].nodes;
        0.5 * (self.nodes[a] + self.nodes[b])
    }

    /// Arc length of the strut's helical centerline (not the chord sum of its elements).
    pub fn strut_centerline_length(&self, s: usize) -> f64 {
        let [(ra, ta, za), (rb, tb, zb)] = self.struts[s].ends;
        let (dr, dt, dz) = (rb - ra, tb - ta, zb - za);
        // 5-point Gauss-Legendre on [0, 1]; the integrand is smooth in s.
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        X.iter()
            .zip(W.iter())
            .map(|(x, w)| {
                let s = 0.5 * (x + 1.0);
                let r = ra + s * dr;
                0.5 * w * ((r * dt).powi(2) + dr * dr + dz * dz).sqrt()
            })
            .sum()
    }

    pub fn region_counts(&self) -> BTreeMap<Region, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.elements {
            *counts.entry(e.region).or_insert(0) += 1;
        }
        counts
    }

    /// Half of the thickest section touching each node, mm.
    pub fn node_half_thickness(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.nodes.len()];
        for e in &self.elements {
            let t = 0.5 * self.sections[e.section].thickness;
            for &n in &e.nodes {
                h[n] = f64::max(h[n], t);
            }
        }
        h
    }

    pub fn z_range(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, e) in self.elements.iter().enumerate() {
            if e.nodes.iter().any(|&v| v >= n) || e.nodes[0] == e.nodes[1] {
                return invalid(format!("element {i} references invalid nodes {:?}", e.nodes));
            }
            if e.section >= self.sections.len() {
                return invalid(format!("element {i} references missing section {}", e.section));
            }
        }
        if !self.is_connected() {
            return Err(Error::Degenerate("frame is not a single connected component".into()));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.elements {
            let (a, b) = (find(&mut parent, e.nodes[0]), find(&mut parent, e.nodes[1]));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }
}
