//! CSV and JSON persistence. Column headers carry units; floats are written
//! in shortest round-trip form so parsing a file reproduces the values exactly.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fatigue::{FailureMode, FatigueRecord, PointId, PointInfo};
use crate::geometry::Region;
use crate::loading::scenarios::{EnergySample, RadialForceCurve, StrainHistoryStore};
use crate::tracking::{Band, TrackingSeries};

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct EnergyRow {
    time_s: f64,
    kinetic_mj: f64,
    strain_mj: f64,
    external_work_mj: f64,
    damping_mj: f64,
}

pub fn write_energy_csv(path: &Path, trace: &[EnergySample]) -> Result<()> {
    write_rows(
        path,
        trace.iter().map(|e| EnergyRow {
            time_s: e.time,
            kinetic_mj: e.kinetic,
            strain_mj: e.strain,
            external_work_mj: e.external_work,
            damping_mj: e.damping,
        }),
    )
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergySample>> {
    Ok(read_rows::<EnergyRow>(path)?
        .into_iter()
        .map(|r| EnergySample {
            time: r.time_s,
            kinetic: r.kinetic_mj,
            strain: r.strain_mj,
            external_work: r.external_work_mj,
            damping: r.damping_mj,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackingRow {
    time_s: f64,
    avg_radius_mm: f64,
    compression_mm: f64,
    eccentricity_index: f64,
    radii_deviation_mm: f64,
}

pub fn write_tracking_csv(path: &Path, series: &TrackingSeries) -> Result<()> {
    write_rows(
        path,
        (0..series.len()).map(|i| TrackingRow {
            time_s: series.times[i],
            avg_radius_mm: series.avg_radius[i],
            compression_mm: series.compression[i],
            eccentricity_index: series.eccentricity_index[i],
            radii_deviation_mm: series.radii_deviation[i],
        }),
    )
}

pub fn read_tracking_csv(path: &Path, band: Band) -> Result<TrackingSeries> {
    let mut s = TrackingSeries::new(band);
    for r in read_rows::<TrackingRow>(path)? {
        s.times.push(r.time_s);
        s.avg_radius.push(r.avg_radius_mm);
        s.compression.push(r.compression_mm);
        s.eccentricity_index.push(r.eccentricity_index);
        s.radii_deviation.push(r.radii_deviation_mm);
    }
    Ok(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct FatigueRow {
    point_id: String,
    region: String,
    eps_mean: f64,
    eps_amp: f64,
    failed: bool,
    failure_mode: String,
    theta_rad: f64,
    z_mm: f64,
}

pub fn write_fatigue_csv(path: &Path, records: &[FatigueRecord]) -> Result<()> {
    write_rows(
        path,
        records.iter().map(|r| FatigueRow {
            point_id: r.point_id.to_string(),
            region: r.region.as_str().into(),
            eps_mean: r.eps_mean,
            eps_amp: r.eps_amp,
            failed: r.failed,
            failure_mode: r.failure_mode.as_str().into(),
            theta_rad: r.angular_pos,
            z_mm: r.axial_pos,
        }),
    )
}

pub fn read_fatigue_csv(path: &Path) -> Result<Vec<FatigueRecord>> {
    read_rows::<FatigueRow>(path)?
        .into_iter()
        .map(|r| {
            Ok(FatigueRecord {
                point_id: r.point_id.parse::<PointId>()?,
                region: r.region.parse::<Region>()?,
                eps_mean: r.eps_mean,
                eps_amp: r.eps_amp,
                failed: r.failed,
                failure_mode: r.failure_mode.parse::<FailureMode>()?,
                angular_pos: r.theta_rad,
                axial_pos: r.z_mm,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct RadialForceRow {
    diameter_mm: f64,
    force_n: f64,
}

pub fn write_radial_force_csv(path: &Path, curve: &RadialForceCurve) -> Result<()> {
    write_rows(
        path,
        curve
            .diameters
            .iter()
            .zip(&curve.forces)
            .map(|(&d, &f)| RadialForceRow { diameter_mm: d, force_n: f }),
    )
}

/// Reads (diameter mm, force N) pairs.
pub fn read_radial_force_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    Ok(read_rows::<RadialForceRow>(path)?.into_iter().map(|r| (r.diameter_mm, r.force_n)).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct StrainRow {
    cycle: usize,
    sample: usize,
    time_s: f64,
    point_id: String,
    region: String,
    theta_rad: f64,
    z_mm: f64,
    strain: f64,
}

/// Long-format dump of one cycle of a strain store, sample-major.
pub fn write_strain_history_csv(path: &Path, store: &StrainHistoryStore, cycle: usize) -> Result<()> {
    if cycle >= store.n_cycles() {
        return Err(Error::Validation(format!("cycle {cycle} not recorded")));
    }
    let n = store.n_points();
    let ids: Vec<String> = store.points.iter().map(|p| p.id.to_string()).collect();
    let rows = store.cycles[cycle].chunks(n).enumerate().flat_map(|(k, sample)| {
        let t = store.times[cycle][k];
        let ids = &ids;
        sample.iter().enumerate().map(move |(i, &e)| {
            let p = &store.points[i];
            StrainRow {
                cycle,
                sample: k,
                time_s: t,
                point_id: ids[i].clone(),
                region: p.region.as_str().into(),
                theta_rad: p.theta,
                z_mm: p.z,
                strain: e,
            }
        })
    });
    write_rows(path, rows)
}

/// One cycle read back from [`write_strain_history_csv`]: the point layout
/// and the sample-major strain buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainCycle {
    pub points: Vec<PointInfo>,
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
}

pub fn read_strain_history_csv(path: &Path) -> Result<StrainCycle> {
    let rows = read_rows::<StrainRow>(path)?;
    let mut points = Vec::new();
    let mut times = Vec::new();
    let mut samples = Vec::with_capacity(rows.len());
    for r in &rows {
        if r.sample == 0 {
            points.push(PointInfo { id: r.point_id.parse()?, region: r.region.parse()?, theta: r.theta_rad, z: r.z_mm });
        }
        if r.sample == times.len() {
            times.push(r.time_s);
        } else if r.sample + 1 != times.len() {
            return Err(Error::Validation(format!("{}: samples out of order", path.display())));
        }
        samples.push(r.strain);
    }
    if points.is_empty() || samples.len() != points.len() * times.len() {
        return Err(Error::Validation(format!("{}: incomplete strain history", path.display())));
    }
    Ok(StrainCycle { points, times, samples })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    let hex = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((total, hex))
}

/// Hashes `artifacts` (relative to `out_dir`) and writes `manifest.json`.
pub fn write_manifest(out_dir: &Path, command: &str, artifacts: &[PathBuf]) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(artifacts.len());
    for rel in artifacts {
        let (bytes, sha256) = sha256_file(&out_dir.join(rel))?;
        entries.push(ArtifactEntry { path: rel.to_string_lossy().replace('\\', "/"), bytes, sha256 });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: "stentfat".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        artifacts: entries,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = TrackingSeries::new(Band::Whole);
        for i in 0..7 {
            let x = 0.1 * i as f64 + 1.0 / 3.0;
            s.times.push(x);
            s.avg_radius.push(12.0 + x.sin());
            s.compression.push(std::f64::consts::PI * x);
            s.eccentricity_index.push(x / 7.0);
            s.radii_deviation.push(x.exp() * 1e-9);
        }
        let p = dir.path().join("t.csv");
        write_tracking_csv(&p, &s).unwrap();
        assert_eq!(read_tracking_csv(&p, Band::Whole).unwrap(), s);
        let head = fs::read_to_string(&p).unwrap();
        assert!(head.starts_with("time_s,avg_radius_mm,compression_mm,eccentricity_index,radii_deviation_mm"));
    }

    #[test]
    fn manifest_hashes_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), b"abc").unwrap();
        let m = write_manifest(dir.path(), "test", &[PathBuf::from("a.txt")]).unwrap();
        assert_eq!(m.artifacts[0].bytes, 3);
        assert_eq!(m.artifacts[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let back: Manifest = read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, m);
    }
}
