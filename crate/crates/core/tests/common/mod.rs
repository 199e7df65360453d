//! Small fixtures shared by the integration tests.

#![allow(dead_code)]

use stentfat::geometry::{StentDesign, ThicknessBand};
use stentfat::loading::{LumenModel, MotionProfile};
use stentfat::sweep::ScenarioConfig;

/// Six-cell, two-row frame; a full pipeline on it takes a few seconds.
pub fn mini_design(name: &str, width: f64) -> StentDesign {
    StentDesign {
        name: name.into(),
        n_cells: 6,
        n_rows: 2,
        ring_diameters: vec![12.0, 11.5, 12.0],
        row_heights: vec![10.0, 10.0],
        strut_width: width,
        thickness_profile: vec![ThicknessBand { from: 0.0, to: 1.0, thickness: 0.3 }],
        region_bands: Default::default(),
        elements_per_strut: 2,
    }
}

pub fn mini_lumen() -> LumenModel {
    LumenModel {
        base_radius_profile: vec![(-30.0, 5.6), (0.0, 5.5), (60.0, 5.7)],
        wall_penalty: 200.0,
        tissue_stiffness: Some(5.0),
        friction_mu: 0.3,
        motion: MotionProfile { period: 0.2, peak_time: 0.06, radial_amplitude: 0.12, ovalization_amplitude: 0.15, ..Default::default() },
    }
}

/// Fast scenario for the mini frame: quick crimp, short beats.
pub fn mini_scenario() -> ScenarioConfig {
    let mut s = ScenarioConfig { crimp_french: 24.0, lumen: mini_lumen(), implantation_depth: 2.0, n_cycles: 2, ..Default::default() };
    s.protocol.crimp_rate = 40.0;
    s.protocol.samples_per_cycle = 20;
    // tight amplitude limit so the small strains of this frame produce some failures
    s.limits.amp_limit = 0.001;
    s
}
