//! Stent motion metrics: compression (change of mean radius), eccentricity
//! index and spread of strut radii, all measured about a fitted axis.
//!
//! The eccentricity index is `1 - R_min / R_max` of a least-squares even
//! harmonic fit of radial distance against angle. The first harmonic is fitted
//! but not evaluated, so a small off-centering does not read as ovality.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Frame;

/// Highest even harmonic order used by the eccentricity fit.
const MAX_EVEN_HARMONICS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub centroid: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Axis {
    pub fn radial_vector(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - self.centroid;
        d - d.dot(&self.direction) * self.direction
    }

    pub fn radial_distance(&self, p: &Vector3<f64>) -> f64 {
        self.radial_vector(p).norm()
    }
}

/// Node subset a metric is computed over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    /// Every node of the frame.
    Whole,
    /// Apex nodes of one ring, inflow ring = 0.
    Ring(usize),
}

impl Band {
    pub fn label(&self) -> String {
        match self {
            Band::Whole => "whole".into(),
            Band::Ring(k) => format!("ring{k}"),
        }
    }

    pub fn nodes(&self, frame: &Frame) -> Result<Vec<usize>> {
        match self {
            Band::Whole => Ok((0..frame.nodes.len()).collect()),
            Band::Ring(k) => frame
                .rings
                .get(*k)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("ring {k} does not exist"))),
        }
    }
}

fn principal_axes(points: &[Vector3<f64>]) -> (Vector3<f64>, SymmetricEigen<f64, nalgebra::U3>) {
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    (c, SymmetricEigen::new(cov))
}

fn eigvec(e: &SymmetricEigen<f64, nalgebra::U3>, largest: bool) -> (f64, Vector3<f64>) {
    let vals = e.eigenvalues;
    let mut idx = 0;
    for i in 1..3 {
        let better = if largest { vals[i] > vals[idx] } else { vals[i] < vals[idx] };
        if better {
            idx = i;
        }
    }
    (vals[idx], e.eigenvectors.column(idx).into())
}

/// Least-squares line through the centroids of `bands`. With fewer than two
/// distinct band centroids the axis is the normal of the best-fit plane of
/// all points. The direction is oriented from the first band to the last, or
/// towards +z for a single band.
pub fn fit_axis(points: &[Vector3<f64>], bands: &[Vec<usize>]) -> Result<Axis> {
    if points.len() < 3 {
        return Err(Error::Degenerate("axis fit needs at least 3 points".into()));
    }
    let (c_all, eig_all) = principal_axes(points);
    let scale = eig_all.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mid = eig_all.eigenvalues.iter().cloned().sum::<f64>() - scale - eig_all.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || mid <= 1e-12 * scale {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let centroids: Vec<Vector3<f64>> = bands
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| b.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / b.len() as f64)
        .collect();
    let spread = centroids.iter().map(|c| (c - centroids[0]).norm()).fold(0.0, f64::max);
    let (centroid, mut direction) = if centroids.len() >= 2 && spread > 1e-9 * scale.sqrt() {
        let (c, e) = principal_axes(&centroids);
        (c, eigvec(&e, true).1)
    } else {
        (c_all, eigvec(&eig_all, false).1)
    };
    let orient = if centroids.len() >= 2 && spread > 0.0 {
        centroids[centroids.len() - 1] - centroids[0]
    } else {
        Vector3::z()
    };
    if direction.dot(&orient) < 0.0 {
        direction = -direction;
    }
    Ok(Axis { centroid, direction: direction.normalize() })
}

/// Mean radial distance of `nodes` about `axis`.
pub fn mean_radius(points: &[Vector3<f64>], nodes: &[usize], axis: &Axis) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Validation("empty band".into()));
    }
    Ok(nodes.iter().map(|&i| axis.radial_distance(&points[i])).sum::<f64>() / nodes.len() as f64)
}

/// Reference mean radius minus current mean radius; positive when compressed.
/// Each configuration is measured about its own fitted axis.
pub fn compression(
    current: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    nodes: &[usize],
    bands: &[Vec<usize>],
) -> Result<f64> {
    if current.len() != reference.len() {
        return Err(Error::Validation("configurations differ in node count".into()));
    }
    let ax_now = fit_axis(current, bands)?;
    let ax_ref = fit_axis(reference, bands)?;
    Ok(mean_radius(reference, nodes, &ax_ref)? - mean_radius(current, nodes, &ax_now)?)
}

/// Population standard deviation of radial distances, mm.
pub fn radii_deviation(points: &[Vector3<f64>], nodes: &[usize], axis: &Axis) -> Result<f64> {
    if nodes.len() < 2 {
        return Err(Error::Validation("radii deviation needs at least 2 nodes".into()));
    }
    let r: Vec<f64> = nodes.iter().map(|&i| axis.radial_distance(&points[i])).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    Ok((r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt())
}

/// Even-harmonic fit of radius against angle.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFit {
    pub mean: f64,
    /// (cos 2k theta, sin 2k theta) coefficients, k = 1..
    pub even: Vec<(f64, f64)>,
}

impl HarmonicFit {
    pub fn eval(&self, theta: f64) -> f64 {
        self.mean
            + self
                .even
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let m = 2.0 * (k + 1) as f64;
                    a * (m * theta).cos() + b * (m * theta).sin()
                })
                .sum::<f64>()
    }

    fn d1(&self, theta: f64) -> f64 {
        self.even
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let m = 2.0 * (k + 1) as f64;
                m * (-a * (m * theta).sin() + b * (m * theta).cos())
            })
            .sum()
    }

    fn d2(&self, theta: f64) -> f64 {
        self.even
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let m = 2.0 * (k + 1) as f64;
                -m * m * (a * (m * theta).cos() + b * (m * theta).sin())
            })
            .sum()
    }

    /// Minimum and maximum of the fitted curve over a full turn.
    pub fn extremes(&self) -> (f64, f64) {
        const GRID: usize = 720;
        let vals: Vec<f64> = (0..GRID).map(|i| self.eval(2.0 * PI * i as f64 / GRID as f64)).collect();
        let polish = |i: usize| {
            let mut t = 2.0 * PI * i as f64 / GRID as f64;
            for _ in 0..20 {
                let h = self.d2(t);
                if h == 0.0 {
                    break;
                }
                let step = self.d1(t) / h;
                t -= step.clamp(-PI / GRID as f64, PI / GRID as f64);
                if step.abs() < 1e-15 {
                    break;
                }
            }
            self.eval(t)
        };
        let imin = (0..GRID).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
        let imax = (0..GRID).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
        (polish(imin).min(vals[imin]), polish(imax).max(vals[imax]))
    }
}

/// Angle and radial distance of each node in the plane normal to `axis`.
/// The angle origin is the first node's radial direction.
pub fn polar_coordinates(points: &[Vector3<f64>], nodes: &[usize], axis: &Axis) -> Vec<(f64, f64)> {
    let n = axis.direction;
    let mut u = Vector3::zeros();
    for &i in nodes {
        let r = axis.radial_vector(&points[i]);
        if r.norm() > 1e-12 {
            u = r.normalize();
            break;
        }
    }
    if u == Vector3::zeros() {
        u = n.cross(&Vector3::x());
        if u.norm() < 1e-6 {
            u = n.cross(&Vector3::y());
        }
        u = u.normalize();
    }
    let v = n.cross(&u);
    nodes
        .iter()
        .map(|&i| {
            let r = axis.radial_vector(&points[i]);
            (r.dot(&v).atan2(r.dot(&u)), r.norm())
        })
        .collect()
}

/// Least-squares harmonic fit; the even order adapts to the node count.
pub fn harmonic_fit(samples: &[(f64, f64)]) -> Result<HarmonicFit> {
    let n = samples.len();
    if n < 6 {
        return Err(Error::Degenerate("harmonic fit needs at least 6 nodes".into()));
    }
    // keep at least two distinct angles per parameter
    let mut angles: Vec<f64> = samples.iter().map(|s| s.0.rem_euclid(2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let distinct = angles.len();
    let n_even = ((distinct / 2).saturating_sub(3) / 2).clamp(1, MAX_EVEN_HARMONICS);
    let cols = 3 + 2 * n_even;
    let mut a = DMatrix::zeros(n, cols);
    let mut y = DVector::zeros(n);
    for (row, &(t, r)) in samples.iter().enumerate() {
        a[(row, 0)] = 1.0;
        a[(row, 1)] = t.cos();
        a[(row, 2)] = t.sin();
        for k in 0..n_even {
            let m = 2.0 * (k + 1) as f64;
            a[(row, 3 + 2 * k)] = (m * t).cos();
            a[(row, 4 + 2 * k)] = (m * t).sin();
        }
        y[row] = r;
    }
    let svd = a.svd(true, true);
    let x = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::Degenerate(format!("harmonic fit: {e}")))?;
    // Rank deficiency means the angles do not resolve the harmonics.
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-10 * smax) {
        return Err(Error::Degenerate("node angles do not resolve the harmonic fit".into()));
    }
    Ok(HarmonicFit { mean: x[0], even: (0..n_even).map(|k| (x[3 + 2 * k], x[4 + 2 * k])).collect() })
}

/// `1 - R_min / R_max` of the harmonic fit of the band; in [0, 1).
pub fn eccentricity_index(points: &[Vector3<f64>], nodes: &[usize], axis: &Axis) -> Result<f64> {
    let fit = harmonic_fit(&polar_coordinates(points, nodes, axis))?;
    let (lo, hi) = fit.extremes();
    if !(hi > 0.0) {
        return Err(Error::Degenerate("non-positive fitted radius".into()));
    }
    Ok((1.0 - lo.max(0.0) / hi).clamp(0.0, 1.0 - f64::EPSILON))
}

/// Per-sample metrics of one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSeries {
    pub band: Band,
    pub times: Vec<f64>,
    pub avg_radius: Vec<f64>,
    pub compression: Vec<f64>,
    pub eccentricity_index: Vec<f64>,
    pub radii_deviation: Vec<f64>,
}

impl TrackingSeries {
    pub fn new(band: Band) -> Self {
        TrackingSeries {
            band,
            times: Vec::new(),
            avg_radius: Vec::new(),
            compression: Vec::new(),
            eccentricity_index: Vec::new(),
            radii_deviation: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn peak_compression(&self) -> f64 {
        self.compression.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_compression(&self) -> f64 {
        self.compression.iter().sum::<f64>() / self.compression.len().max(1) as f64
    }

    pub fn mean_eccentricity(&self) -> f64 {
        self.eccentricity_index.iter().sum::<f64>() / self.eccentricity_index.len().max(1) as f64
    }

    /// Samples with `t0 <= t < t1`.
    pub fn window(&self, t0: f64, t1: f64) -> TrackingSeries {
        let mut out = TrackingSeries::new(self.band.clone());
        for i in 0..self.len() {
            if self.times[i] >= t0 && self.times[i] < t1 {
                out.times.push(self.times[i]);
                out.avg_radius.push(self.avg_radius[i]);
                out.compression.push(self.compression[i]);
                out.eccentricity_index.push(self.eccentricity_index[i]);
                out.radii_deviation.push(self.radii_deviation[i]);
            }
        }
        out
    }
}

/// Records tracking samples of one band against a reference configuration.
#[derive(Debug, Clone)]
pub struct Tracker {
    nodes: Vec<usize>,
    bands: Vec<Vec<usize>>,
    reference_radius: f64,
    pub series: TrackingSeries,
}

impl Tracker {
    pub fn new(frame: &Frame, reference: &[Vector3<f64>], band: Band) -> Result<Self> {
        let nodes = band.nodes(frame)?;
        let bands = frame.rings.clone();
        let axis = fit_axis(reference, &bands)?;
        let reference_radius = mean_radius(reference, &nodes, &axis)?;
        Ok(Tracker { nodes, bands, reference_radius, series: TrackingSeries::new(band) })
    }

    pub fn record(&mut self, time: f64, points: &[Vector3<f64>]) -> Result<()> {
        let axis = fit_axis(points, &self.bands)?;
        let avg = mean_radius(points, &self.nodes, &axis)?;
        let s = &mut self.series;
        s.times.push(time);
        s.avg_radius.push(avg);
        s.compression.push(self.reference_radius - avg);
        s.eccentricity_index.push(eccentricity_index(points, &self.nodes, &axis)?);
        s.radii_deviation.push(radii_deviation(points, &self.nodes, &axis)?);
        Ok(())
    }
}
