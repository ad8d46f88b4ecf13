//! Synthetic two-detector benchmark: coloured Gaussian noise, Newtonian chirp
//! injections distributed uniformly in volume, and a train/test segment split.
//!
//! Background strain is the injection-free noise; foreground strain is the
//! same noise with the injections added. Segments render lazily and keep the
//! result for reuse.

mod chirp;
pub mod io;
mod noise;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use chirp::{
    f_isco, generate_injections, inject, unit_snr, unit_waveform, InjectionConfig, InjectionRecord,
    MPC_SEC, MSUN_SEC,
};
pub use noise::{colored_noise, derive_seed, generate_noise, mix64, PsdModel};

use crate::dsp::SampledSeries;
use crate::error::{Error, Result};

pub const CHANNELS: [&str; 2] = ["H1", "L1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub fs: f64,
    /// Segment length (s); each segment holds `duration * fs + 1` samples.
    pub segment_duration: f64,
    pub train_segments: usize,
    pub test_segments: usize,
    pub injections_per_segment: usize,
    /// Largest injected distance (Mpc).
    pub d_max: f64,
    pub injection: InjectionConfig,
    pub psd: PsdModel,
    pub seed: u64,
    /// Start time of the first segment (GPS s).
    pub t0: f64,
    /// Offset between consecutive segment start times (s).
    pub segment_stride: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            fs: 2048.0,
            segment_duration: 900.0,
            train_segments: 8,
            test_segments: 2,
            injections_per_segment: 6,
            d_max: 2000.0,
            injection: InjectionConfig::default(),
            psd: PsdModel::default(),
            seed: 0,
            t0: 1_238_166_018.0,
            segment_stride: 1000.0,
        }
    }
}

impl DatasetConfig {
    pub fn samples_per_segment(&self) -> usize {
        (self.segment_duration * self.fs).round() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Injections rendered into noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainDataset {
    pub h1: SampledSeries,
    pub l1: SampledSeries,
    pub injections: Vec<InjectionRecord>,
    pub d_max: f64,
    pub seed: u64,
}

/// Adds `injections` (sorted by coalescence time) to a noise pair and fills in
/// their optimal SNRs.
pub fn render_dataset(
    noise: [SampledSeries; 2],
    mut injections: Vec<InjectionRecord>,
    psd: &PsdModel,
    f_low: f64,
    d_max: f64,
    seed: u64,
) -> StrainDataset {
    injections.sort_by(|a, b| a.t_coal.total_cmp(&b.t_coal));
    let mut ch = noise;
    inject(&mut ch, &mut injections, psd, f_low);
    let [h1, l1] = ch;
    StrainDataset { h1, l1, injections, d_max, seed }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub name: String,
    pub split: Split,
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
}

impl SegmentInfo {
    pub fn duration(&self) -> f64 {
        self.n as f64 * self.dt
    }
}

/// Both strain variants of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentData {
    pub background: [SampledSeries; 2],
    pub foreground: [SampledSeries; 2],
}

#[derive(Debug, Clone)]
enum Source {
    Synthetic { psd: PsdModel, f_low: f64 },
    Files { dir: PathBuf },
}

#[derive(Debug)]
pub struct Segment {
    pub info: SegmentInfo,
    pub injections: Vec<InjectionRecord>,
    source: Source,
    cache: OnceLock<Arc<SegmentData>>,
}

impl Segment {
    /// Background and foreground strain, rendered or read on first use.
    pub fn data(&self) -> Result<Arc<SegmentData>> {
        if let Some(d) = self.cache.get() {
            return Ok(d.clone());
        }
        let d = Arc::new(self.load()?);
        Ok(self.cache.get_or_init(|| d).clone())
    }

    fn load(&self) -> Result<SegmentData> {
        let i = &self.info;
        match &self.source {
            Source::Synthetic { psd, f_low } => {
                let background = generate_noise(i.n, 1.0 / i.dt, i.t0, psd, i.seed)?;
                let mut foreground = background.clone();
                let mut inj = self.injections.clone();
                inject(&mut foreground, &mut inj, psd, *f_low);
                Ok(SegmentData { background, foreground })
            }
            Source::Files { dir } => {
                let read = |kind: &str| -> Result<[SampledSeries; 2]> {
                    let d = dir.join(kind);
                    Ok([io::read_strain(&d, CHANNELS[0])?.0, io::read_strain(&d, CHANNELS[1])?.0])
                };
                Ok(SegmentData { background: read("background")?, foreground: read("foreground")? })
            }
        }
    }

    /// Drops cached strain.
    pub fn release(&mut self) {
        self.cache = OnceLock::new();
    }
}

/// Segments plus the injection population parameters needed for scoring.
#[derive(Debug)]
pub struct Benchmark {
    pub d_max: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    d_max: f64,
    segments: Vec<SegmentInfo>,
    config: Option<DatasetConfig>,
}

const MANIFEST_FORMAT: &str = "gwevo-dataset/1";

impl Benchmark {
    /// Builds the synthetic benchmark described by `cfg`. Injection parameters
    /// and SNRs are computed eagerly; strain is rendered on demand.
    pub fn synthetic(cfg: &DatasetConfig) -> Result<Self> {
        if !(cfg.fs > 0.0 && cfg.segment_duration > 0.0) {
            return Err(Error::param("sampling rate and segment duration must be positive"));
        }
        let n = cfg.samples_per_segment();
        let dt = 1.0 / cfg.fs;
        let total = cfg.train_segments + cfg.test_segments;
        let mut segments = Vec::with_capacity(total);
        for idx in 0..total {
            let split = if idx < cfg.train_segments { Split::Train } else { Split::Test };
            let name = match split {
                Split::Train => format!("train_{idx:03}"),
                Split::Test => format!("test_{:03}", idx - cfg.train_segments),
            };
            let t0 = cfg.t0 + idx as f64 * cfg.segment_stride;
            let noise_seed = derive_seed(&[cfg.seed, idx as u64, 0]);
            let inj_seed = derive_seed(&[cfg.seed, idx as u64, 1]);
            let mut injections = generate_injections(
                cfg.injections_per_segment,
                cfg.d_max,
                t0,
                cfg.segment_duration,
                &cfg.injection,
                inj_seed,
            )?;
            for inj in &mut injections {
                let (_, w) = unit_waveform(inj.chirp_mass, inj.t_coal, cfg.injection.f_low, t0, dt, n);
                inj.snr_opt = 2f64.sqrt() * unit_snr(&w, cfg.fs, &cfg.psd) / inj.distance;
            }
            segments.push(Segment {
                info: SegmentInfo { name, split, t0, dt, n, seed: noise_seed },
                injections,
                source: Source::Synthetic { psd: cfg.psd, f_low: cfg.injection.f_low },
                cache: OnceLock::new(),
            });
        }
        Ok(Benchmark { d_max: cfg.d_max, segments })
    }

    /// Builds a benchmark from explicit segments (used when injections are
    /// chosen by hand).
    pub fn from_injections(
        cfg: &DatasetConfig,
        per_segment: Vec<Vec<InjectionRecord>>,
        split: Split,
    ) -> Result<Self> {
        let n = cfg.samples_per_segment();
        let dt = 1.0 / cfg.fs;
        let segments = per_segment
            .into_iter()
            .enumerate()
            .map(|(idx, mut injections)| {
                let t0 = cfg.t0 + idx as f64 * cfg.segment_stride;
                injections.sort_by(|a, b| a.t_coal.total_cmp(&b.t_coal));
                for inj in &mut injections {
                    let (_, w) = unit_waveform(inj.chirp_mass, inj.t_coal, cfg.injection.f_low, t0, dt, n);
                    inj.snr_opt = 2f64.sqrt() * unit_snr(&w, cfg.fs, &cfg.psd) / inj.distance;
                }
                Segment {
                    info: SegmentInfo {
                        name: format!("seg_{idx:03}"),
                        split,
                        t0,
                        dt,
                        n,
                        seed: derive_seed(&[cfg.seed, idx as u64, 0]),
                    },
                    injections,
                    source: Source::Synthetic { psd: cfg.psd, f_low: cfg.injection.f_low },
                    cache: OnceLock::new(),
                }
            })
            .collect();
        Ok(Benchmark { d_max: cfg.d_max, segments })
    }

    pub fn split(&self, split: Split) -> Vec<&Segment> {
        self.segments.iter().filter(|s| s.info.split == split).collect()
    }

    pub fn all(&self) -> Vec<&Segment> {
        self.segments.iter().collect()
    }

    /// Writes every segment's strain, injections and a manifest to `dir`.
    pub fn write(&self, dir: &Path, config: Option<&DatasetConfig>) -> Result<()> {
        fs::create_dir_all(dir)?;
        for seg in &self.segments {
            let sd = dir.join(&seg.info.name);
            let data = seg.data()?;
            for (kind, pair) in [("background", &data.background), ("foreground", &data.foreground)] {
                for (ch, x) in CHANNELS.iter().zip(pair.iter()) {
                    io::write_strain(&sd.join(kind), ch, x, seg.info.seed)?;
                }
            }
            io::write_injections(&sd.join("injections.csv"), &seg.injections)?;
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            d_max: self.d_max,
            segments: self.segments.iter().map(|s| s.info.clone()).collect(),
            config: config.cloned(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Opens a dataset directory written by [`Benchmark::write`]. Fails if the
    /// manifest, any strain file or any injection catalog is missing.
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath)?).map_err(|e| Error::Format {
            path: mpath.display().to_string(),
            reason: e.to_string(),
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                path: mpath.display().to_string(),
                reason: format!("unsupported format `{}`", manifest.format),
            });
        }
        let mut segments = Vec::new();
        for info in manifest.segments {
            let sd = dir.join(&info.name);
            let truth = sd.join("injections.csv");
            if !truth.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("missing injection catalog {}", truth.display()),
                )));
            }
            for kind in ["background", "foreground"] {
                for ch in CHANNELS {
                    let p = sd.join(kind).join(format!("{ch}.f64"));
                    if !p.is_file() {
                        return Err(Error::Io(std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            format!("missing strain file {}", p.display()),
                        )));
                    }
                }
            }
            let injections = io::read_injections(&truth)?;
            segments.push(Segment { info, injections, source: Source::Files { dir: sd }, cache: OnceLock::new() });
        }
        Ok(Benchmark { d_max: manifest.d_max, segments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            fs: 256.0,
            segment_duration: 200.0,
            train_segments: 2,
            test_segments: 1,
            injections_per_segment: 3,
            d_max: 800.0,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn zero_injections_leave_noise_untouched() {
        let cfg = small();
        let noise = generate_noise(cfg.samples_per_segment(), cfg.fs, 0.0, &cfg.psd, 1).unwrap();
        let ds = render_dataset(noise.clone(), Vec::new(), &cfg.psd, 20.0, 800.0, 1);
        assert_eq!(ds.h1, noise[0]);
        assert_eq!(ds.l1, noise[1]);
    }

    #[test]
    fn superposition_is_exact() {
        let cfg = small();
        let noise = generate_noise(cfg.samples_per_segment(), cfg.fs, 0.0, &cfg.psd, 2).unwrap();
        let inj = generate_injections(2, 500.0, 0.0, 200.0, &cfg.injection, 9).unwrap();
        let joint = render_dataset(noise.clone(), inj.clone(), &cfg.psd, 20.0, 500.0, 2);
        let first = render_dataset(noise, vec![inj[0]], &cfg.psd, 20.0, 500.0, 2);
        let both = render_dataset([first.h1, first.l1], vec![inj[1]], &cfg.psd, 20.0, 500.0, 2);
        assert_eq!(joint.h1, both.h1);
        assert_eq!(joint.l1, both.l1);
    }

    #[test]
    fn synthetic_benchmark_layout() {
        let b = Benchmark::synthetic(&small()).unwrap();
        assert_eq!(b.split(Split::Train).len(), 2);
        assert_eq!(b.split(Split::Test).len(), 1);
        let s = &b.segments[1];
        assert_eq!(s.info.n, 200 * 256 + 1);
        assert_eq!(s.info.t0, 1_238_166_018.0 + 1000.0);
        assert!(s.injections.iter().all(|i| i.snr_opt > 0.0));
        let d = s.data().unwrap();
        assert_ne!(d.background[0], d.foreground[0]);
        assert_eq!(d.background[0].t0, s.info.t0);
    }

    #[test]
    fn determinism() {
        let a = Benchmark::synthetic(&small()).unwrap();
        let b = Benchmark::synthetic(&small()).unwrap();
        assert_eq!(a.segments[0].injections, b.segments[0].injections);
        assert_eq!(a.segments[0].data().unwrap().foreground, b.segments[0].data().unwrap().foreground);
    }

    #[test]
    fn write_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig { train_segments: 1, test_segments: 0, segment_duration: 100.0, injections_per_segment: 1, ..small() };
        let b = Benchmark::synthetic(&cfg).unwrap();
        b.write(dir.path(), Some(&cfg)).unwrap();
        let r = Benchmark::open(dir.path()).unwrap();
        assert_eq!(r.d_max, b.d_max);
        assert_eq!(r.segments[0].info, b.segments[0].info);
        assert_eq!(r.segments[0].injections, b.segments[0].injections);
        assert_eq!(r.segments[0].data().unwrap().as_ref(), b.segments[0].data().unwrap().as_ref());
        fs::remove_file(dir.path().join(&cfg_name(&r)).join("injections.csv")).unwrap();
        assert!(Benchmark::open(dir.path()).is_err());
    }

    fn cfg_name(b: &Benchmark) -> String {
        b.segments[0].info.name.clone()
    }
}
