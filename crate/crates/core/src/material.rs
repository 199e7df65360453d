//! Uniaxial superelastic nitinol model for beam fibers.
//!
//! The martensite fraction `xi` moves linearly with stress along two lines:
//! forward `sigma = start + xi * (end - start)` and reverse
//! `sigma = reverse_end + xi * (reverse_start - reverse_end)`. Between the two
//! lines the fiber is elastic with the Reuss mixture modulus
//! `E(xi) = 1 / ((1 - xi) / E_A + xi / E_M)` and a frozen transformation
//! strain `sign * xi * eps_L`. Stresses in MPa, strains logarithmic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const MATERIAL_JSON: &str = include_str!("../data/materials/nitinol-37c.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e_a: f64,
    pub nu_a: f64,
    pub e_m: f64,
    pub nu_m: f64,
    pub eps_l: f64,
    pub dsig_dt_l: f64,
    pub sig_ls: f64,
    pub sig_le: f64,
    pub t0: f64,
    pub dsig_dt_u: f64,
    pub sig_us: f64,
    pub sig_ue: f64,
    pub sig_cls: f64,
    /// Volumetric transformation strain. Kept for completeness; the
    /// uniaxial law has no use for it.
    pub eps_vl: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            e_a: 24_000.0,
            nu_a: 0.33,
            e_m: 35_000.0,
            nu_m: 0.33,
            eps_l: 0.04,
            dsig_dt_l: 6.527,
            sig_ls: 250.0,
            sig_le: 270.0,
            t0: 37.0,
            dsig_dt_u: 6.527,
            sig_us: 40.0,
            sig_ue: 20.0,
            sig_cls: 900.0,
            eps_vl: 0.04,
        }
    }
}

impl MaterialParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: MaterialParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The shipped 37 °C parameter file.
    pub fn bundled() -> Self {
        Self::from_json(MATERIAL_JSON).expect("bundled material parses")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_a > 0.0 && self.e_m > 0.0) {
            return invalid("moduli must be positive");
        }
        if !(self.sig_le > self.sig_ls && self.sig_ls > self.sig_us && self.sig_us > self.sig_ue && self.sig_ue > 0.0) {
            return invalid("need sig_LE > sig_LS > sig_US > sig_UE > 0");
        }
        if !(self.eps_l > 0.0) {
            return invalid("eps_L must be positive");
        }
        if self.sig_cls < self.sig_ls {
            return invalid("sig_CLS must be >= sig_LS");
        }
        Ok(())
    }

    /// Shear modulus of austenite, used for elastic torsion.
    pub fn shear_modulus(&self) -> f64 {
        self.e_a / (2.0 * (1.0 + self.nu_a))
    }

    pub fn mixture_modulus(&self, xi: f64) -> f64 {
        1.0 / ((1.0 - xi) / self.e_a + xi / self.e_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Tension,
    Compression,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Tension => 1.0,
            Sense::Compression => -1.0,
        }
    }
}

/// Transformation stress magnitudes at a given temperature, MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformationStresses {
    pub start: f64,
    pub end: f64,
    pub reverse_start: f64,
    pub reverse_end: f64,
}

/// Linear Clausius–Clapeyron shift of the four transformation stresses.
/// In compression the whole flag is lifted so that forward transformation
/// starts at `sig_cls`; plateau widths match tension.
pub fn transformation_stresses(params: &MaterialParams, temperature: f64, sense: Sense) -> TransformationStresses {
    let dt = temperature - params.t0;
    let lift = match sense {
        Sense::Tension => 0.0,
        Sense::Compression => params.sig_cls - params.sig_ls,
    };
    TransformationStresses {
        start: params.sig_ls + lift + params.dsig_dt_l * dt,
        end: params.sig_le + lift + params.dsig_dt_l * dt,
        reverse_start: params.sig_us + lift + params.dsig_dt_u * dt,
        reverse_end: params.sig_ue + lift + params.dsig_dt_u * dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Branch {
    #[default]
    Elastic,
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FiberState {
    pub strain: f64,
    pub stress: f64,
    pub xi: f64,
    /// Signed transformation strain, `±xi * eps_L`.
    pub eps_tr: f64,
    /// Branch taken by the last update; drives [`fiber_tangent`].
    pub branch: Branch,
}

impl FiberState {
    fn sense(&self) -> Option<Sense> {
        if self.xi <= 0.0 {
            None
        } else if self.eps_tr >= 0.0 {
            Some(Sense::Tension)
        } else {
            Some(Sense::Compression)
        }
    }
}

/// Smallest non-negative root of `a x^2 + b x + c = 0` near the linearized
/// solution `-c / b`.
fn plateau_root(a: f64, b: f64, c: f64) -> f64 {
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return -c / b;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return 0.0;
    }
    let (r1, r2) = (q / a, c / q);
    let lin = -c / b;
    if a == 0.0 || (r2 - lin).abs() <= (r1 - lin).abs() {
        r2
    } else {
        r1
    }
}

/// Return-mapping update of a fiber to the total strain `strain_new`.
pub fn fiber_update(state: &FiberState, strain_new: f64, params: &MaterialParams, temperature: f64) -> Result<FiberState> {
    if !strain_new.is_finite() || !state.stress.is_finite() || !state.xi.is_finite() {
        return Err(Error::NonFinite("fiber_update"));
    }
    let inv_ea = 1.0 / params.e_a;
    let d_inv = 1.0 / params.e_m - inv_ea;

    let mut xi = state.xi;
    let mut sense = state.sense();
    let mut branch = Branch::Elastic;
    let mut stress_in = 0.0;

    // At most: reverse to xi = 0, then forward in the opposite sense.
    for _ in 0..3 {
        let s = sense.unwrap_or(if strain_new >= 0.0 { Sense::Tension } else { Sense::Compression });
        let ts = transformation_stresses(params, temperature, s);
        let e = s.sign() * strain_new;
        let modulus = params.mixture_modulus(xi);
        let trial = modulus * (e - xi * params.eps_l);
        let fwd_width = ts.end - ts.start;
        let rev_width = ts.reverse_start - ts.reverse_end;
        let fwd_line = ts.start + xi * fwd_width;
        let rev_line = ts.reverse_end + xi * rev_width;

        if trial > fwd_line && xi < 1.0 {
            // (line0 + xi w)(1/E_A + xi d) = e - xi eps_L
            let root = plateau_root(
                d_inv * fwd_width,
                inv_ea * fwd_width + d_inv * ts.start + params.eps_l,
                inv_ea * ts.start - e,
            );
            let xi_new = root.clamp(xi, 1.0);
            if xi_new >= 1.0 {
                xi = 1.0;
                stress_in = params.e_m * (e - params.eps_l);
                branch = Branch::Elastic;
            } else {
                xi = xi_new;
                stress_in = ts.start + xi * fwd_width;
                branch = Branch::Forward;
            }
            sense = Some(s);
            break;
        } else if trial < rev_line && xi > 0.0 {
            let root = plateau_root(
                d_inv * rev_width,
                inv_ea * rev_width + d_inv * ts.reverse_end + params.eps_l,
                inv_ea * ts.reverse_end - e,
            );
            let xi_new = root.clamp(0.0, xi);
            if xi_new <= 0.0 {
                xi = 0.0;
                sense = None;
                stress_in = params.e_a * e;
                branch = Branch::Elastic;
                // The strain may have gone far enough to load the other way.
                continue;
            }
            xi = xi_new;
            stress_in = ts.reverse_end + xi * rev_width;
            branch = Branch::Reverse;
            sense = Some(s);
            break;
        } else {
            stress_in = trial;
            branch = Branch::Elastic;
            sense = if xi > 0.0 { Some(s) } else { None };
            break;
        }
    }

    let sign = sense.map(Sense::sign).unwrap_or(if strain_new >= 0.0 { 1.0 } else { -1.0 });
    let stress = sign * stress_in;
    let eps_tr = if xi > 0.0 { sign * xi * params.eps_l } else { 0.0 };
    if !stress.is_finite() {
        return Err(Error::NonFinite("fiber_update stress"));
    }
    Ok(FiberState { strain: strain_new, stress, xi, eps_tr, branch })
}

/// Incremental stiffness used for stable-increment estimates, MPa.
/// On a transformation plateau this is the nominal hardening slope
/// `(sigma_end - sigma_start) / eps_L`; elsewhere the mixture modulus.
pub fn fiber_tangent(state: &FiberState, params: &MaterialParams, temperature: f64) -> f64 {
    let sense = state.sense().unwrap_or(Sense::Tension);
    let ts = transformation_stresses(params, temperature, sense);
    match state.branch {
        Branch::Forward => (ts.end - ts.start) / params.eps_l,
        Branch::Reverse => (ts.reverse_start - ts.reverse_end) / params.eps_l,
        Branch::Elastic => params.mixture_modulus(state.xi),
    }
}
