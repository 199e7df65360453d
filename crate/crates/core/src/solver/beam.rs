//! Corotational Euler–Bernoulli beam with fiber-integrated axial response.
//!
//! The element frame is the mean of the two nodal triads with its first axis
//! snapped onto the current chord. Local end rotations are measured against
//! that frame, so the deformational quantities (log axial strain, end
//! rotations, twist) are invariant under rigid motions.

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::Result;
use crate::material::{fiber_update, FiberState, MaterialParams};

#[derive(Debug, Clone, Copy)]
pub struct Fiber {
    /// Offset along the width direction (local y), mm.
    pub y: f64,
    /// Offset along the thickness direction (local z), mm.
    pub z: f64,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct BeamElement {
    pub nodes: [usize; 2],
    pub l0: f64,
    /// Initial local triad (columns: chord, width, thickness).
    pub frame0: UnitQuaternion<f64>,
    pub fibers: Vec<Fiber>,
    /// Torsional rigidity G J, N mm².
    pub gj: f64,
    pub area: f64,
}

/// Nodal forces and moments from one element, global frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElementForces {
    pub force: [Vector3<f64>; 2],
    pub moment: [Vector3<f64>; 2],
}

/// Deformational kinematics of an element.
#[derive(Debug, Clone, Copy)]
pub struct LocalKinematics {
    pub chord: Vector3<f64>,
    pub length: f64,
    pub axial_strain: f64,
    pub frame: UnitQuaternion<f64>,
    pub rot_a: Vector3<f64>,
    pub rot_b: Vector3<f64>,
}

/// Rotation vector of a unit quaternion, accurate for small angles.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
    let v = q.imag();
    let s = v.norm();
    if s < 1e-300 {
        return 2.0 * v;
    }
    let angle = 2.0 * s.atan2(q.w);
    v * (angle / s)
}

/// Rectangular-section fiber layout on an `nw x nt` Gauss–Legendre grid.
pub fn gauss_fibers(width: f64, thickness: f64, nw: usize, nt: usize) -> Vec<Fiber> {
    let gw = gauss_legendre(nw);
    let gt = gauss_legendre(nt);
    let mut out = Vec::with_capacity(nw * nt);
    for &(xw, ww) in &gw {
        for &(xt, wt) in &gt {
            out.push(Fiber {
                y: 0.5 * width * xw,
                z: 0.5 * thickness * xt,
                area: 0.25 * width * thickness * ww * wt,
            });
        }
    }
    out
}

/// Gauss–Legendre points and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let x = 1.0 / 3f64.sqrt();
            vec![(-x, 1.0), (x, 1.0)]
        }
        3 => {
            let x = (0.6f64).sqrt();
            vec![(-x, 5.0 / 9.0), (0.0, 8.0 / 9.0), (x, 5.0 / 9.0)]
        }
        _ => {
            // Newton iteration on Legendre polynomials.
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
            }
            out
        }
    }
}

/// Saint-Venant torsion constant of a b x t rectangle.
pub fn torsion_constant(width: f64, thickness: f64) -> f64 {
    let (b, t) = if width >= thickness { (width, thickness) } else { (thickness, width) };
    let r = t / b;
    b * t.powi(3) * (1.0 / 3.0 - 0.21 * r * (1.0 - r.powi(4) / 12.0))
}

impl BeamElement {
    pub fn kinematics(&self, x: &[Vector3<f64>], q: &[UnitQuaternion<f64>]) -> LocalKinematics {
        let [a, b] = self.nodes;
        let d = x[b] - x[a];
        let length = d.norm();
        let e1 = d / length;
        let ta = q[a] * self.frame0;
        let tb = q[b] * self.frame0;
        let rel = ta.inverse() * tb;
        let half = UnitQuaternion::from_scaled_axis(0.5 * rotation_vector(&rel));
        let mid = ta * half;
        let r1 = mid * Vector3::x();
        let align = UnitQuaternion::rotation_between(&r1, &e1).unwrap_or_else(UnitQuaternion::identity);
        let frame = align * mid;
        let inv = frame.inverse();
        LocalKinematics {
            chord: e1,
            length,
            axial_strain: (length / self.l0).ln(),
            frame,
            rot_a: rotation_vector(&(inv * ta)),
            rot_b: rotation_vector(&(inv * tb)),
        }
    }

    /// Fiber strain at a station `s` in [-1, 1] for fiber `f`.
    pub fn fiber_strain(&self, k: &LocalKinematics, s: f64, f: &Fiber) -> f64 {
        let (ca, cb) = (3.0 * s - 1.0, 3.0 * s + 1.0);
        let kz = (ca * k.rot_a.z + cb * k.rot_b.z) / self.l0;
        let ky = (ca * k.rot_a.y + cb * k.rot_b.y) / self.l0;
        k.axial_strain - f.y * kz + f.z * ky
    }

    /// Updates the element's fiber states in place and returns its nodal
    /// internal forces. `fibers` is laid out station-major.
    pub fn internal_forces(
        &self,
        x: &[Vector3<f64>],
        q: &[UnitQuaternion<f64>],
        stations: &[(f64, f64)],
        fibers: &mut [FiberState],
        params: &MaterialParams,
        temperature: f64,
    ) -> Result<ElementForces> {
        let k = self.kinematics(x, q);
        let nf = self.fibers.len();
        let (mut n_bar, mut mya, mut myb, mut mza, mut mzb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (si, &(s, w)) in stations.iter().enumerate() {
            let (mut n, mut my, mut mz) = (0.0, 0.0, 0.0);
            for (fi, f) in self.fibers.iter().enumerate() {
                let slot = &mut fibers[si * nf + fi];
                let eps = self.fiber_strain(&k, s, f);
                *slot = fiber_update(slot, eps, params, temperature)?;
                let fa = slot.stress * f.area;
                n += fa;
                mz -= fa * f.y;
                my += fa * f.z;
            }
            n_bar += 0.5 * w * n;
            mya += 0.5 * w * my * (3.0 * s - 1.0);
            myb += 0.5 * w * my * (3.0 * s + 1.0);
            mza += 0.5 * w * mz * (3.0 * s - 1.0);
            mzb += 0.5 * w * mz * (3.0 * s + 1.0);
        }
        let torque = self.gj * (k.rot_b.x - k.rot_a.x) / self.l0;
        let ma = k.frame * Vector3::new(-torque, mya, mza);
        let mb = k.frame * Vector3::new(torque, myb, mzb);
        // fiber stresses act on the volume-preserving current area A0 l0 / l
        let fb = n_bar * (self.l0 / k.length) * k.chord + k.chord.cross(&(ma + mb)) / k.length;
        Ok(ElementForces {
            force: [-fb, fb],
            moment: [ma, mb],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=6 {
            let g = gauss_legendre(n);
            let w: f64 = g.iter().map(|p| p.1).sum();
            assert!((w - 2.0).abs() < 1e-13);
            // exact for degree 2n-1
            let deg = 2 * n - 2;
            let integral: f64 = g.iter().map(|p| p.0.powi(deg as i32) * p.1).sum();
            assert!((integral - 2.0 / (deg as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn fiber_grid_reproduces_section_properties() {
        let f = gauss_fibers(0.3, 0.2, 2, 2);
        let a: f64 = f.iter().map(|f| f.area).sum();
        let iz: f64 = f.iter().map(|f| f.area * f.y * f.y).sum();
        let iy: f64 = f.iter().map(|f| f.area * f.z * f.z).sum();
        assert!((a - 0.06).abs() < 1e-15);
        assert!((iz - 0.3f64.powi(3) * 0.2 / 12.0).abs() < 1e-15);
        assert!((iy - 0.3 * 0.2f64.powi(3) / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_vector_roundtrip() {
        let v = Vector3::new(0.3, -0.2, 1.1);
        let q = UnitQuaternion::from_scaled_axis(v);
        assert!((rotation_vector(&q) - v).norm() < 1e-14);
        let tiny = Vector3::new(1e-12, 0.0, -3e-13);
        assert!((rotation_vector(&UnitQuaternion::from_scaled_axis(tiny)) - tiny).norm() < 1e-26);
    }

    #[test]
    fn square_torsion_constant() {
        // tabulated beta = 0.1406 for b/t = 1
        assert!((torsion_constant(1.0, 1.0) - 0.1406).abs() < 2e-3);
    }
}
