use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::PsdModel;
use crate::dsp::{fft, SampledSeries};
use crate::error::{Error, Result};

/// Solar mass in seconds (G M / c^3).
pub const MSUN_SEC: f64 = 4.925_491e-6;
/// Megaparsec in light-seconds.
pub const MPC_SEC: f64 = 3.085_677_581_491_367_3e22 / 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    /// Coalescence time (s).
    pub t_coal: f64,
    /// Luminosity distance (Mpc).
    pub distance: f64,
    /// Chirp mass (solar masses).
    pub chirp_mass: f64,
    /// Optimal network SNR against the generating PSD; zero until rendered.
    pub snr_opt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub chirp_mass_min: f64,
    pub chirp_mass_max: f64,
    /// Minimum spacing between coalescence times (s).
    pub min_separation: f64,
    /// Keep-out at both segment ends (s).
    pub edge_margin: f64,
    /// Frequency at which waveforms start (Hz).
    pub f_low: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            chirp_mass_min: 8.0,
            chirp_mass_max: 30.0,
            min_separation: 40.0,
            edge_margin: 20.0,
            f_low: 20.0,
        }
    }
}

/// Draws `n` injections uniform in volume out to `d_max`, with coalescence
/// times uniform over the segment subject to the spacing and edge constraints.
pub fn generate_injections(
    n: usize,
    d_max: f64,
    t0: f64,
    duration: f64,
    cfg: &InjectionConfig,
    seed: u64,
) -> Result<Vec<InjectionRecord>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(d_max > 0.0) {
        return Err(Error::param(format!("d_max must be positive, got {d_max}")));
    }
    if !(cfg.chirp_mass_min > 0.0 && cfg.chirp_mass_min <= cfg.chirp_mass_max) {
        return Err(Error::param("chirp-mass range must be positive and ordered"));
    }
    let span = duration - 2.0 * cfg.edge_margin;
    let slack = span - (n - 1) as f64 * cfg.min_separation;
    if slack < 0.0 {
        return Err(Error::param(format!(
            "{n} injections {}s apart do not fit in {duration}s with {}s margins",
            cfg.min_separation, cfg.edge_margin
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    Ok(offsets
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let cube: f64 = 1.0 - rng.random::<f64>();
            let distance = d_max * cube.cbrt();
            let chirp_mass = cfg.chirp_mass_min + rng.random::<f64>() * (cfg.chirp_mass_max - cfg.chirp_mass_min);
            InjectionRecord {
                t_coal: t0 + cfg.edge_margin + u + i as f64 * cfg.min_separation,
                distance,
                chirp_mass,
                snr_opt: 0.0,
            }
        })
        .collect())
}

/// Innermost-stable-orbit frequency for an equal-mass system of this chirp mass.
pub fn f_isco(chirp_mass: f64) -> f64 {
    4400.0 / (2f64.powf(1.2) * chirp_mass)
}

fn time_to_coalescence(f: f64, m: f64) -> f64 {
    5.0 / 256.0 * m.powf(-5.0 / 3.0) * (PI * f).powf(-8.0 / 3.0)
}

/// Newtonian chirp at 1 Mpc sampled on `series`' grid, returned as
/// `(first sample index, samples)` covering only the in-segment support.
pub fn unit_waveform(
    chirp_mass: f64,
    t_coal: f64,
    f_low: f64,
    t0: f64,
    dt: f64,
    n: usize,
) -> (usize, Vec<f64>) {
    let m = chirp_mass * MSUN_SEC;
    let f_end = f_isco(chirp_mass);
    let tau_start = time_to_coalescence(f_low, m);
    let tau_end = time_to_coalescence(f_end, m);
    let start_t = t_coal - tau_start;
    let end_t = t_coal - tau_end;
    let first = ((start_t - t0) / dt).ceil().max(0.0) as usize;
    let last = (((end_t - t0) / dt).floor()).min(n as f64 - 1.0);
    if last < 0.0 || first as f64 > last {
        return (0, Vec::new());
    }
    let last = last as usize;
    let taper_in = (0.1 * (tau_start - tau_end)).min(1.0);
    let taper_out = (2.0 / f_end).min(0.5 * (tau_start - tau_end));
    let amp0 = 4.0 * m.powf(5.0 / 3.0) * PI.powf(2.0 / 3.0) / MPC_SEC;
    let samples = (first..=last)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            let tau = t_coal - t;
            let f = (5.0 / (256.0 * tau)).powf(3.0 / 8.0) * m.powf(-5.0 / 8.0) / PI;
            let phase = -2.0 * (tau / (5.0 * m)).powf(5.0 / 8.0);
            let mut h = amp0 * f.powf(2.0 / 3.0) * phase.cos();
            let since = t - start_t;
            if since < taper_in {
                h *= 0.5 * (1.0 - (PI * since / taper_in).cos());
            }
            let until = end_t - t;
            if until < taper_out {
                h *= 0.5 * (1.0 - (PI * until / taper_out).cos());
            }
            h
        })
        .collect();
    (first, samples)
}

/// Optimal SNR at 1 Mpc of a waveform in one detector with PSD `psd`.
pub fn unit_snr(waveform: &[f64], fs: f64, psd: &PsdModel) -> f64 {
    if waveform.is_empty() {
        return 0.0;
    }
    let dt = 1.0 / fs;
    let len = waveform.len();
    let df = fs / len as f64;
    let spec = fft::rfft(waveform);
    let inner: f64 = spec
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| (c * dt).norm_sqr() / psd.value(k as f64 * df))
        .sum::<f64>()
        * df;
    (4.0 * inner).sqrt()
}

/// Adds injections to both channels (identical response, no time delay) and
/// records each injection's network optimal SNR.
pub fn inject(
    channels: &mut [SampledSeries; 2],
    injections: &mut [InjectionRecord],
    psd: &PsdModel,
    f_low: f64,
) {
    let (t0, dt, n) = (channels[0].t0, channels[0].dt, channels[0].len());
    for inj in injections.iter_mut() {
        let (first, w) = unit_waveform(inj.chirp_mass, inj.t_coal, f_low, t0, dt, n);
        inj.snr_opt = 2f64.sqrt() * unit_snr(&w, 1.0 / dt, psd) / inj.distance;
        for ch in channels.iter_mut() {
            for (s, v) in ch.samples[first..first + w.len()].iter_mut().zip(&w) {
                *s += v / inj.distance;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> InjectionConfig {
        InjectionConfig::default()
    }

    #[test]
    fn cube_law_distances() {
        let inj = generate_injections(10_000, 100.0, 0.0, 1e7, &InjectionConfig { min_separation: 1.0, ..cfg() }, 1)
            .unwrap();
        let frac = inj.iter().filter(|i| i.distance <= 50.0).count() as f64 / 1e4;
        assert!((frac - 0.125).abs() < 0.02, "{frac}");
        assert!(inj.iter().all(|i| i.distance > 0.0 && i.distance <= 100.0));
    }

    #[test]
    fn separation_and_margins() {
        for seed in 0..20 {
            let inj = generate_injections(6, 500.0, 100.0, 900.0, &cfg(), seed).unwrap();
            for w in inj.windows(2) {
                assert!(w[1].t_coal - w[0].t_coal >= 40.0 - 1e-9);
            }
            assert!(inj[0].t_coal >= 120.0 && inj[5].t_coal <= 980.0);
        }
        assert!(generate_injections(0, 1.0, 0.0, 10.0, &cfg(), 0).unwrap().is_empty());
        assert!(generate_injections(30, 500.0, 0.0, 900.0, &cfg(), 0).is_err());
    }

    #[test]
    fn chirp_sweeps_upward_and_stops_before_coalescence() {
        let fs = 2048.0;
        let (first, w) = unit_waveform(10.0, 50.0, 20.0, 0.0, 1.0 / fs, 200_000);
        assert!(!w.is_empty());
        let end = (first + w.len()) as f64 / fs;
        assert!(end < 50.0 && end > 49.9);
        // zero crossings get denser towards coalescence
        let crossings = |s: &[f64]| s.windows(2).filter(|p| p[0].signum() != p[1].signum()).count();
        let q = w.len() / 4;
        assert!(crossings(&w[3 * q..]) > crossings(&w[..q]));
    }

    #[test]
    fn snr_scales_inversely_with_distance() {
        let psd = PsdModel::default();
        let make = |d: f64| {
            let base = SampledSeries::new(vec![0.0; 2048 * 60 + 1], 0.0, 1.0 / 2048.0).unwrap();
            let mut ch = [base.clone(), base];
            let mut inj = [InjectionRecord { t_coal: 40.0, distance: d, chirp_mass: 12.0, snr_opt: 0.0 }];
            inject(&mut ch, &mut inj, &psd, 20.0);
            (ch, inj[0].snr_opt)
        };
        let (c1, s1) = make(200.0);
        let (c2, s2) = make(400.0);
        assert!((s1 / s2 - 2.0).abs() < 1e-6);
        for (a, b) in c1[0].samples.iter().zip(&c2[0].samples) {
            assert_eq!(*a, 2.0 * b);
        }
        assert_eq!(c1[0], c1[1]);
    }
}
