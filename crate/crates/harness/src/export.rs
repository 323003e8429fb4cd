//! File outputs: CSV tables, trajectory containers, field images and the run
//! manifest.
//!
//! Trajectory files (`.pftr`) are little-endian: magic `PFTR`, `u32` version,
//! `u32` nx, `u32` ny, `u32` number of levels, `f64` dt, then for each level
//! the pressure field followed by the saturation field as `f64`, row-major
//! from `j = 0`.
//!
//! Images are 8-bit RGB PNGs with one pixel per cell, `j = ny - 1` on the
//! top row, coloured with viridis between the field's minimum and maximum.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use porflow_core::metrics::{ErrorReport, SpeedupRow, WellQuantities};
use porflow_core::sim::StepDiagnostics;
use porflow_core::State;
use porflow_picnn::StepRecord;

use crate::error::{HarnessError, Result};

const TRAJ_MAGIC: &[u8; 4] = b"PFTR";
const TRAJ_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(|e| HarnessError::io(path, e))
}

/// Trajectory levels `0..=n` with the step size between them.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub states: Vec<State>,
}

pub fn write_trajectory(path: &Path, traj: &StoredTrajectory) -> Result<()> {
    let n = traj.nx * traj.ny;
    let mut bytes = Vec::with_capacity(28 + traj.states.len() * n * 16);
    bytes.extend_from_slice(TRAJ_MAGIC);
    for v in [TRAJ_VERSION, traj.nx as u32, traj.ny as u32, traj.states.len() as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&traj.dt.to_le_bytes());
    for s in &traj.states {
        if s.pressure.len() != n || s.sw.len() != n {
            return Err(HarnessError::format(path, "state does not match the grid"));
        }
        for v in s.pressure.iter().chain(&s.sw) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = create(path)?;
    f.write_all(&bytes).and_then(|_| f.flush()).map_err(|e| HarnessError::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<StoredTrajectory> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |r: &str| HarnessError::format(path, r);
    if bytes.len() < 28 || &bytes[..4] != TRAJ_MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    if u32_at(4) != TRAJ_VERSION as usize {
        return Err(bad("unsupported trajectory version"));
    }
    let (nx, ny, levels) = (u32_at(8), u32_at(12), u32_at(16));
    let dt = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let n = nx * ny;
    if bytes.len() != 28 + levels * n * 16 {
        return Err(bad("truncated or oversized trajectory"));
    }
    let vals: Vec<f64> =
        bytes[28..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let states = vals
        .chunks_exact(2 * n.max(1))
        .take(levels)
        .map(|c| State { pressure: c[..n].to_vec(), sw: c[n..].to_vec() })
        .collect();
    Ok(StoredTrajectory { nx, ny, dt, states })
}

/// One row per level: step, time and field summaries.
pub fn write_steps_csv(path: &Path, dt: f64, states: &[State]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "time_days", "mean_pressure", "min_pressure", "max_pressure", "mean_sw", "min_sw", "max_sw"])?;
    for (k, s) in states.iter().enumerate() {
        let stats = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            [mean, lo, hi]
        };
        let mut row = vec![k.to_string(), (k as f64 * dt).to_string()];
        row.extend(stats(&s.pressure).iter().chain(&stats(&s.sw)).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Newton statistics per step (timing goes to [`write_timing_csv`]).
pub fn write_newton_csv(path: &Path, diags: &[StepDiagnostics]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "newton_iterations", "step_cuts", "final_residual"])?;
    for d in diags {
        let last = d.residual_history.last().copied().unwrap_or(f64::NAN);
        w.write_record([d.step.to_string(), d.newton_iterations.to_string(), d.step_cuts.to_string(), last.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Wall-clock seconds per step; kept apart from the deterministic outputs.
pub fn write_timing_csv(path: &Path, secs: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "wall_clock_secs"])?;
    for (k, s) in secs.iter().enumerate() {
        w.write_record([(k + 1).to_string(), s.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// One row per cell.
pub fn write_field_csv(path: &Path, nx: usize, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["i", "j"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    let n = columns.first().map_or(0, |c| c.1.len());
    for c in 0..n {
        let mut row = vec![(c % nx).to_string(), (c / nx).to_string()];
        row.extend(columns.iter().map(|(_, v)| v[c].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_mape_csv(path: &Path, dt: f64, report: &ErrorReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "time_days", "mape_pressure", "mape_saturation"])?;
    for (k, (p, s)) in report.mape_pressure.iter().zip(&report.mape_saturation).enumerate() {
        w.write_record([(k + 1).to_string(), ((k + 1) as f64 * dt).to_string(), p.to_string(), s.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_losses_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "epochs_used", "final_loss", "physics_loss", "data_loss"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.epochs_used.to_string(),
            r.final_loss.to_string(),
            r.physics_loss.to_string(),
            r.data_loss.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_loss_history_csv(path: &Path, histories: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "epoch", "loss"])?;
    for (k, h) in histories.iter().enumerate() {
        for (e, l) in h.iter().enumerate() {
            w.write_record([(k + 1).to_string(), e.to_string(), l.to_string()])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Producer quantities per step; `reference` may be absent.
pub fn write_wells_csv(path: &Path, predicted: &[Vec<WellQuantities>], reference: Option<&[Vec<WellQuantities>]>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["step", "well", "wbp", "oil_rate", "water_rate"];
    if reference.is_some() {
        header.extend(["wbp_ref", "oil_rate_ref", "water_rate_ref"]);
    }
    w.write_record(&header)?;
    for (k, wells) in predicted.iter().enumerate() {
        for (n, q) in wells.iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), q.well.clone(), q.wbp.to_string(), q.oil_rate.to_string(), q.water_rate.to_string()];
            if let Some(r) = reference {
                let r = &r[k][n];
                row.extend([r.wbp.to_string(), r.oil_rate.to_string(), r.water_rate.to_string()]);
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_bench_csv(path: &Path, rows: &[SpeedupRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["grid", "dofs", "parameter_count", "training_secs", "inference_secs_per_step", "sim_secs_per_step", "speedup"])?;
    for r in rows {
        w.write_record([
            r.grid.clone(),
            r.dofs.to_string(),
            r.parameter_count.to_string(),
            r.training_secs.map_or(String::new(), |v| v.to_string()),
            r.inference_secs.to_string(),
            r.sim_secs.to_string(),
            r.speedup.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Colour scale of an exported image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub file: String,
    pub min: f64,
    pub max: f64,
}

/// Writes `values` (row-major from `j = 0`) as an `nx` by `ny` image.
pub fn write_field_png(path: &Path, nx: usize, ny: usize, values: &[f64]) -> Result<ImageEntry> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut rgb = Vec::with_capacity(nx * ny * 3);
    for row in (0..ny).rev() {
        for i in 0..nx {
            let v = values[row * nx + i];
            let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
            let c = colorous::VIRIDIS.eval_continuous(t.clamp(0.0, 1.0));
            rgb.extend_from_slice(&[c.r, c.g, c.b]);
        }
    }
    let file = create(path)?;
    let mut enc = png::Encoder::new(file, nx as u32, ny as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&rgb)?;
    writer.finish()?;
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    Ok(ImageEntry { file: name, min: lo, max: hi })
}

/// Describes what a command wrote; saved as `<command>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// sha256 of the resolved configuration.
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub images: Vec<ImageEntry>,
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: &str, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: hex(&Sha256::digest(resolved_config.as_bytes())),
            seed,
            files: Vec::new(),
            images: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        write_text(&path, &text)?;
        Ok(path)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pftr");
        let traj = StoredTrajectory {
            nx: 3,
            ny: 2,
            dt: 2.0,
            states: vec![State::uniform(6, 3000.0, 0.2), State { pressure: (0..6).map(|v| v as f64).collect(), sw: vec![0.5; 6] }],
        };
        write_trajectory(&path, &traj).unwrap();
        assert_eq!(read_trajectory(&path).unwrap(), traj);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_trajectory(&path), Err(HarnessError::Format { .. })));
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mape.csv");
        write_mape_csv(&path, 2.0, &ErrorReport::default()).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "step,time_days,mape_pressure,mape_saturation\n");
    }

    #[test]
    fn image_has_one_pixel_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let values: Vec<f64> = (0..64 * 64).map(|v| v as f64).collect();
        let entry = write_field_png(&path, 64, 64, &values).unwrap();
        assert_eq!((entry.min, entry.max), (0.0, 4095.0));
        let decoder = png::Decoder::new(File::open(&path).unwrap());
        let reader = decoder.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (64, 64));
        let first = std::fs::read(&path).unwrap();
        write_field_png(&path, 64, 64, &values).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }
}
