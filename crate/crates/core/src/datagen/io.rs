//! On-disk formats: raw little-endian `f64` strain with a JSON sidecar, and
//! CSV injection catalogs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chirp::InjectionRecord;
use crate::dsp::SampledSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainSidecar {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub channel: String,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), reason: reason.into() }
}

/// Writes `<stem>.f64` and `<stem>.json`.
pub fn write_strain(dir: &Path, channel: &str, x: &SampledSeries, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(format!("{channel}.f64")))?);
    for v in &x.samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let side = StrainSidecar { t0: x.t0, dt: x.dt, n: x.len(), seed, channel: channel.to_string() };
    fs::write(dir.join(format!("{channel}.json")), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_strain(dir: &Path, channel: &str) -> Result<(SampledSeries, StrainSidecar)> {
    let side_path = dir.join(format!("{channel}.json"));
    let side: StrainSidecar = serde_json::from_slice(&fs::read(&side_path)?)
        .map_err(|e| format_err(&side_path, e.to_string()))?;
    let raw_path = dir.join(format!("{channel}.f64"));
    let raw = fs::read(&raw_path)?;
    if raw.len() != side.n * 8 {
        return Err(format_err(
            &raw_path,
            format!("expected {} samples, file holds {} bytes", side.n, raw.len()),
        ));
    }
    let samples = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let series = SampledSeries::new(samples, side.t0, side.dt).map_err(|e| format_err(&raw_path, e.to_string()))?;
    Ok((series, side))
}

pub const INJECTION_HEADER: &str = "t_coal,distance,chirp_mass,snr_opt";

pub fn write_injections(path: &Path, injections: &[InjectionRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{INJECTION_HEADER}")?;
    for i in injections {
        writeln!(w, "{},{},{},{}", i.t_coal, i.distance, i.chirp_mass, i.snr_opt)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_injections(path: &Path) -> Result<Vec<InjectionRecord>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != INJECTION_HEADER {
        return Err(format_err(path, format!("expected header `{INJECTION_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("line {}: {e}", i + 2)))?;
        if v.len() != 4 {
            return Err(format_err(path, format!("line {}: expected 4 fields", i + 2)));
        }
        out.push(InjectionRecord { t_coal: v[0], distance: v[1], chirp_mass: v[2], snr_opt: v[3] });
    }
    Ok(out)
}
