//! Nitinol stent frame simulation: parametric diamond-cell frames, a
//! superelastic fiber material, an explicit corotational beam solver, crimp /
//! deploy / cardiac-cycle loading, deformation tracking and strain-based
//! fatigue screening.

pub mod error;
pub mod fatigue;
pub mod geometry;
pub mod io;
pub mod loading;
pub mod material;
pub mod solver;
pub mod svg;
pub mod sweep;
pub mod tracking;

pub use error::{Error, Result};
