//! Lumen motion calibration run.
//!
//! Crimps the bundled CoreValve-like control (optionally with scaled strut
//! width) to 16 Fr, deploys it into the default lumen with the given radial
//! amplitude and tissue stiffness, runs the beat cycles and prints peak
//! compression, eccentricity and periodicity. The shipped defaults were
//! chosen by running this for width factors 1.2, 1.0 and 0.8.
//!
//! ```text
//! cargo run --release -p stentfat --example calibrate_lumen -- [width_factor] [a0] [k_tissue] [cycles]
//! ```

use std::time::Instant;

use stentfat::geometry::{build_stent, scale_strut_width, StentDesign};
use stentfat::loading::{anchorage_force, french_to_mm, Protocol};
use stentfat::sweep::ScenarioConfig;

fn arg(i: usize) -> Option<f64> {
    std::env::args().nth(i).map(|s| s.parse().expect("numeric argument"))
}

fn main() {
    let factor = arg(1).unwrap_or(1.0);
    let mut scenario = ScenarioConfig::default();
    if let Some(a0) = arg(2) {
        scenario.lumen.motion.radial_amplitude = a0;
    }
    if let Some(k) = arg(3) {
        scenario.lumen.tissue_stiffness = Some(k);
    }
    let cycles = arg(4).map_or(scenario.n_cycles, |c| c as usize);

    let design = scale_strut_width(&StentDesign::corevalve26_like(), factor).unwrap();
    let frame = build_stent(&design).unwrap();
    let p = Protocol::new(&frame, &scenario.material, &scenario.protocol, Some(&scenario.lumen)).unwrap();

    let t = Instant::now();
    let (crimped, log) = p.crimp(french_to_mm(scenario.crimp_french)).unwrap();
    println!(
        "{}: crimp {} steps in {:.1?}, max KE/SE {:.4}, sheath force {:.2} N",
        design.name,
        log.steps,
        t.elapsed(),
        log.max_ke_ratio,
        crimped.contact.sheath_force()
    );

    let t = Instant::now();
    let (deployed, log) = p.deploy(&crimped, &scenario.lumen, scenario.implantation_depth).unwrap();
    println!("deploy {} steps in {:.1?}, anchorage {:.2} N", log.steps, t.elapsed(), anchorage_force(&deployed.contact));

    let t = Instant::now();
    let b = p.beat_cycles(&deployed, &scenario.lumen, cycles).unwrap();
    let tr = &b.tracking;
    println!(
        "beat {} steps in {:.1?}: peak compression {:.3} mm, mean {:.3} mm, mean EI {:.4}",
        b.log.steps,
        t.elapsed(),
        tr.peak_compression(),
        tr.mean_compression(),
        tr.mean_eccentricity()
    );
    println!("periodicity between consecutive cycles: {:?}", b.periodicity);
    let peak = b.anchorage.iter().cloned().fold(0.0, f64::max);
    println!("anchorage over the beat: peak {peak:.2} N");
}
