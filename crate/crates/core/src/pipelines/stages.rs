//! Stage implementations behind the pipeline DSL.

use super::dsl::{PipelineDsl, Role, Stage};
use super::DetectionCatalog;
use crate::dsp::{
    complex_spectrogram, fft, find_peaks, median_filter, numeric, ricker_cwt, savgol_filter, welch,
    welch_psd, whiten_fft, PeakParams, SampledSeries, WindowKind, TINY,
};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn detrend(stage: Option<&Stage>, x: &SampledSeries) -> Result<SampledSeries> {
    match stage.map(|s| s.name.as_str()) {
        None | Some("detrend_none") => Ok(x.clone()),
        Some("detrend_median") => {
            let base = median_filter(&x.samples, stage.unwrap().get_usize("kernel"))?;
            Ok(x.with_samples(x.samples.iter().zip(&base).map(|(a, b)| a - b).collect()))
        }
        Some(other) => Err(Error::eval(format!("`{other}` is not a detrend stage"))),
    }
}

fn whiten(stage: &Stage, x: &SampledSeries) -> Result<SampledSeries> {
    match stage.name.as_str() {
        "whiten_welch" => whiten_welch(stage, x),
        "whiten_adaptive" => whiten_adaptive(stage, x),
        other => Err(Error::eval(format!("`{other}` is not a whitening stage"))),
    }
}

fn whiten_welch(stage: &Stage, x: &SampledSeries) -> Result<SampledSeries> {
    let nperseg = stage.get_usize("nperseg");
    if x.len() < nperseg {
        return Err(Error::eval(format!(
            "whiten_welch: series of {} samples is shorter than nperseg {nperseg}",
            x.len()
        )));
    }
    let noverlap = (nperseg as f64 * stage.get("overlap")) as usize;
    let m = numeric::mean(&x.samples);
    let centered = x.with_samples(x.samples.iter().map(|v| v - m).collect());
    let psd = welch_psd(&centered, nperseg, noverlap, WindowKind::Hann)?;
    Ok(whiten_fft(&centered, &psd, stage.get_usize("smooth")))
}

fn whiten_adaptive(stage: &Stage, x: &SampledSeries) -> Result<SampledSeries> {
    let eps = TINY;
    let fs = x.fs();
    let m = numeric::mean(&x.samples);
    let centered: Vec<f64> = x.samples.iter().map(|v| v - m).collect();
    let n = centered.len();

    let win_sec = (n as f64 / fs / stage.get("win_div")).clamp(stage.get("win_min"), stage.get("win_max"));
    let nperseg = ((win_sec * fs) as usize).min(n).max(10);
    if nperseg > n {
        return Err(Error::eval(format!("whiten_adaptive: series of {n} samples is too short")));
    }
    let mut noverlap = (nperseg as f64 * stage.get("overlap")) as usize;
    if noverlap >= nperseg {
        noverlap = nperseg - 1;
    }
    let window = WindowKind::TukeySymmetric { alpha: stage.get("tukey_alpha") }.samples(nperseg);
    let est = welch(&centered, fs, &window, noverlap)?;
    let freqs = est.freqs;
    let psd: Vec<f64> = est.psd.into_iter().map(|p| p.max(eps)).collect();

    let diff_arr: Vec<f64> = psd.windows(2).map(|w| (w[1] - w[0]).abs() / (w[0] + eps)).collect();
    let smooth_diff = if diff_arr.len() >= 3 {
        numeric::convolve_same(&diff_arr, &[1.0 / 3.0; 3])
    } else {
        diff_arr
    };
    let (a_base, a_slope) = (stage.get("alpha_base"), stage.get("alpha_slope"));
    let (a_min, a_max) = (stage.get("alpha_min"), stage.get("alpha_max"));
    let mut smoothed = psd.clone();
    for i in 1..psd.len() {
        let d = smooth_diff[(i - 1).min(smooth_diff.len() - 1)];
        let alpha = (a_base - a_slope * d).clamp(a_min, a_max);
        smoothed[i] = alpha * smoothed[i - 1] + (1.0 - alpha) * psd[i];
    }

    let baseline = numeric::median(&smoothed);
    let raw_gain: Vec<f64> = smoothed.iter().map(|s| s / (baseline + eps) - 1.0).collect();

    let sg_window = stage.get_usize("savgol_window");
    let len = smoothed.len();
    let win_len = if len >= sg_window { sg_window } else { (len / 2) * 2 + 1 };
    let sg_order = stage.get_usize("savgol_polyorder");
    let polyorder = if win_len > sg_order { sg_order } else { 1 };
    let delta = numeric::mean(&numeric::diff(&freqs));
    let grad = savgol_filter(&smoothed, win_len, polyorder, 1, delta)?;

    let (sig_scale, rate, clip) = (stage.get("sigmoid_scale"), stage.get("gain_rate"), stage.get("gain_clip"));
    let gain: Vec<f64> = grad
        .iter()
        .zip(&raw_gain)
        .map(|(g, r)| {
            let scaling = 1.0 + sig_scale * sigmoid(g.abs() / (baseline + eps));
            (1.0 - (-rate * scaling * r).exp()).clamp(-clip, clip)
        })
        .collect();

    let mut spec = fft::rfft(&centered);
    let bins = fft::rfftfreq(n, x.dt);
    let g = numeric::interp(&bins, &freqs, &gain);
    let p = numeric::interp(&bins, &freqs, &smoothed);
    for ((c, gi), pi) in spec.iter_mut().zip(&g).zip(&p) {
        let denom = (pi.sqrt() * (gi.abs() + eps)).max(eps);
        *c /= denom;
    }
    Ok(x.with_samples(fft::irfft(&spec, n)))
}

struct MetricSeries {
    values: Vec<f64>,
    times: Vec<f64>,
}

fn metric(stage: &Stage, h1: &SampledSeries, l1: &SampledSeries) -> Result<MetricSeries> {
    let nperseg = stage.get_usize("nperseg");
    let noverlap = stage.get_usize("noverlap");
    if h1.len() < nperseg {
        return Err(Error::eval(format!(
            "{}: series of {} samples is shorter than nperseg {nperseg}",
            stage.name,
            h1.len()
        )));
    }
    let s1 = complex_spectrogram(h1, nperseg, noverlap)?;
    let s2 = complex_spectrogram(l1, nperseg, noverlap)?;
    match stage.name.as_str() {
        "metric_meanpower" => {
            let nf = s1.n_freqs() as f64;
            let values = (0..s1.n_times())
                .map(|t| {
                    let sum: f64 = s1
                        .frame(t)
                        .iter()
                        .zip(s2.frame(t))
                        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()) / 2.0)
                        .sum();
                    sum / nf
                })
                .collect();
            let t_end = h1.time(h1.len() - 1);
            let mid = h1.t0 + (t_end - h1.t0) / 2.0;
            let half_last = s1.times.last().copied().unwrap_or(0.0) / 2.0;
            let times = s1.times.iter().map(|t| mid + (t - half_last)).collect();
            Ok(MetricSeries { values, times })
        }
        "metric_coherent" => coherent_metric(stage, &s1, &s2, h1),
        other => Err(Error::eval(format!("`{other}` is not a metric stage"))),
    }
}

fn coherent_metric(
    stage: &Stage,
    s1: &crate::dsp::ComplexSpectrogram,
    s2: &crate::dsp::ComplexSpectrogram,
    h1: &SampledSeries,
) -> Result<MetricSeries> {
    let eps = TINY;
    let nf = s1.n_freqs();
    let nt = s1.n_times().min(s2.n_times());
    if nt == 0 {
        return Err(Error::eval("metric_coherent: no spectrogram frames"));
    }
    let coherence: Vec<f64> = s1.values[..nt * nf]
        .iter()
        .zip(&s2.values[..nt * nf])
        .map(|(a, b)| (a.arg() - b.arg()).cos().abs())
        .collect();

    let column_median = |s: &crate::dsp::ComplexSpectrogram| -> Vec<f64> {
        let mut col = vec![0.0; nt];
        (0..nf)
            .map(|f| {
                for (t, c) in col.iter_mut().enumerate() {
                    *c = s.values[t * nf + f].norm_sqr();
                }
                numeric::median(&col)
            })
            .collect()
    };
    let psd1 = column_median(s1);
    let psd2 = column_median(s2);
    let (med1, med2) = (numeric::median(&psd1), numeric::median(&psd2));
    let (lmin, lmax) = (stage.get("lambda_min"), stage.get("lambda_max"));
    let reg: Vec<f64> = (0..nf)
        .map(|f| {
            let lambda = (0.5 * (med1 / (psd1[f] + eps) + med2 / (psd2[f] + eps))).clamp(lmin, lmax);
            psd1[f] + psd2[f] + lambda + eps
        })
        .collect();
    let novel_weight = numeric::mean(
        &(0..nf).map(|f| (med1 + med2) / (psd1[f] + psd2[f] + eps)).collect::<Vec<_>>(),
    );
    let (c_lin, c_tanh) = (stage.get("curv_linear"), stage.get("curv_tanh"));

    let mut column = vec![0.0; nf];
    let values = (0..nt)
        .map(|t| {
            let frame = &coherence[t * nf..(t + 1) * nf];
            column.copy_from_slice(frame);
            let d2 = numeric::gradient(&numeric::gradient(&column));
            let curvature = numeric::mean(&d2.iter().map(|v| v.abs()).collect::<Vec<_>>());
            let linear = 1.0 + c_lin * curvature;
            let boost = 1.0 + (c_tanh * curvature).tanh();
            let sum: f64 = frame.iter().zip(&reg).map(|(c, r)| c / r * linear * boost).sum();
            sum * novel_weight
        })
        .collect();
    let offset = h1.t0 + (stage.get_usize("nperseg") as f64 / 2.0) / h1.fs();
    let times = s1.times[..nt].iter().map(|t| t + offset).collect();
    Ok(MetricSeries { values, times })
}

fn trigger(stage: &Stage, m: &MetricSeries) -> Result<DetectionCatalog> {
    match stage.name.as_str() {
        "trigger_basic" => {
            let bg = numeric::median(&m.values);
            let peaks = find_peaks(
                &m.values,
                PeakParams {
                    height: Some(bg * stage.get("height")),
                    distance: Some(stage.get_usize("distance")),
                    prominence: Some(bg * stage.get("prominence")),
                },
            );
            let var = stage.get("var");
            Ok(DetectionCatalog {
                times: peaks.iter().map(|&p| m.times[p]).collect(),
                stats: peaks.iter().map(|&p| m.values[p]).collect(),
                vars: vec![var; peaks.len()],
            })
        }
        "trigger_multires" => Ok(multires(stage, m)),
        other => Err(Error::eval(format!("`{other}` is not a trigger stage"))),
    }
}

fn multires(stage: &Stage, m: &MetricSeries) -> DetectionCatalog {
    let x = &m.values;
    let n = x.len();
    let bg = numeric::median(x);
    let mad = numeric::median(&x.iter().map(|v| (v - bg).abs()).collect::<Vec<_>>());
    let rstd = 1.4826 * mad;
    let peaks = find_peaks(
        x,
        PeakParams {
            height: Some(bg + stage.get("threshold") * rstd),
            distance: Some(stage.get_usize("distance")),
            prominence: Some(stage.get("prominence") * rstd),
        },
    );
    let mut out = DetectionCatalog::default();
    if peaks.is_empty() {
        return out;
    }

    let uw = stage.get_usize("uncertainty_window");
    let sigma = uw as f64 / 2.5;
    let mut kernel: Vec<f64> = (-(uw as i64)..=uw as i64)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= ksum);
    let wmean = numeric::convolve_same(x, &kernel);
    let wsq = numeric::convolve_same(&x.iter().map(|v| v * v).collect::<Vec<_>>(), &kernel);
    let floor = stage.get("uncertainty_floor");

    let second: Vec<f64> = if n > 2 {
        let d: Vec<f64> = x.windows(3).map(|w| (w[2] - w[1]) - (w[1] - w[0])).collect();
        let mut s = Vec::with_capacity(n);
        s.push(d[0]);
        s.extend_from_slice(&d);
        s.push(d[d.len() - 1]);
        s
    } else {
        vec![0.0; n]
    };
    let veto_on = stage.get("veto_enabled") != 0.0;
    let veto = stage.get("veto");
    let widths: Vec<f64> = (1..=stage.get_usize("max_width")).map(|w| w as f64).collect();

    for &p in &peaks {
        if veto_on && second[p] > -veto * rstd {
            continue;
        }
        let lo = p.saturating_sub(uw);
        let hi = (p + uw + 1).min(n);
        let local = &x[lo..hi];
        if local.len() < 3 {
            continue;
        }
        let Ok(coeffs) = ricker_cwt(local, &widths) else {
            continue;
        };
        let max_coeff = coeffs.iter().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
        let thresh = mad * (2.0 * (local.len() as f64 + TINY).ln()).sqrt();
        if max_coeff >= thresh {
            let var = (wsq[p] - wmean[p] * wmean[p]).max(0.0).sqrt().max(floor);
            out.times.push(m.times[p]);
            out.stats.push(x[p]);
            out.vars.push(var);
        }
    }
    out
}

/// Executes a validated pipeline on a pair of equally sampled channels.
pub fn run_dsl(p: &PipelineDsl, h1: &SampledSeries, l1: &SampledSeries) -> Result<DetectionCatalog> {
    if h1.len() != l1.len() || h1.t0 != l1.t0 || h1.dt != l1.dt {
        return Err(Error::param("channels must share one time axis"));
    }
    let need = |role| {
        p.stage(role).ok_or_else(|| Error::eval(format!("pipeline lacks a {role:?} stage")))
    };
    let (ws, ms, ts) = (need(Role::Whiten)?, need(Role::Metric)?, need(Role::Trigger)?);
    let ds = p.stage(Role::Detrend);
    let w1 = whiten(ws, &detrend(ds, h1)?)?;
    let w2 = whiten(ws, &detrend(ds, l1)?)?;
    let series = metric(ms, &w1, &w2)?;
    if series.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::eval("metric series contains non-finite values"));
    }
    let catalog = trigger(ts, &series)?;
    catalog.validate()?;
    Ok(catalog)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_noise, render_dataset, InjectionRecord, PsdModel};
    use crate::pipelines::{elite_dsl, parse_dsl, seed_dsl};

    const FS: f64 = 1024.0;

    fn noise(seconds: f64, seed: u64) -> [SampledSeries; 2] {
        let n = (seconds * FS) as usize + 1;
        generate_noise(n, FS, 0.0, &PsdModel::default(), seed).unwrap()
    }

    fn zeros(seconds: f64) -> SampledSeries {
        SampledSeries::new(vec![0.0; (seconds * FS) as usize + 1], 0.0, 1.0 / FS).unwrap()
    }

    #[test]
    fn zero_strain_gives_empty_catalogs() {
        let z = zeros(16.0);
        assert!(run_dsl(seed_dsl(), &z, &z).unwrap().is_empty());
        assert!(run_dsl(elite_dsl(), &z, &z).unwrap().is_empty());
    }

    #[test]
    fn seed_on_noise_stays_near_median() {
        let [h1, l1] = noise(64.0, 3);
        let c = run_dsl(seed_dsl(), &h1, &l1).unwrap();
        assert!(!c.is_empty());
        let med = numeric::median(&c.stats);
        assert!(c.stats.iter().all(|&s| s < 10.0 * med));
        assert!(c.vars.iter().all(|&v| v == 10.0));
    }

    #[test]
    fn seed_finds_a_loud_chirp() {
        let t_coal = 40.3;
        let inj = vec![InjectionRecord { t_coal, distance: 1.0, chirp_mass: 20.0, snr_opt: 0.0 }];
        let psd = PsdModel::default();
        let probe = render_dataset(noise(64.0, 5), inj.clone(), &psd, 20.0, 1.0, 5);
        let distance = probe.injections[0].snr_opt / 30.0;
        let inj = vec![InjectionRecord { distance, ..inj[0] }];
        let data = render_dataset(noise(64.0, 5), inj, &psd, 20.0, distance, 5);
        assert!((data.injections[0].snr_opt - 30.0).abs() < 1e-6);
        let c = run_dsl(seed_dsl(), &data.h1, &data.l1).unwrap();
        let loudest = (0..c.len()).max_by(|&a, &b| c.stats[a].total_cmp(&c.stats[b])).unwrap();
        assert!((c.times[loudest] - t_coal).abs() < 10.0, "{}", c.times[loudest]);
    }

    #[test]
    fn short_series_is_an_evaluation_error() {
        let z = SampledSeries::new(vec![1.0; 4000], 0.0, 1.0 / FS).unwrap();
        assert!(matches!(run_dsl(seed_dsl(), &z, &z), Err(Error::Evaluation(_))));
    }

    #[test]
    fn zero_prominence_admits_more_peaks() {
        let [h1, l1] = noise(64.0, 11);
        let base = run_dsl(seed_dsl(), &h1, &l1).unwrap();
        let mut loose = seed_dsl().clone();
        loose.stage_mut(Role::Trigger).unwrap().params.insert("prominence".into(), 0.0);
        let more = run_dsl(&loose, &h1, &l1).unwrap();
        assert!(more.len() > base.len(), "{} vs {}", more.len(), base.len());
    }

    #[test]
    fn textual_encodings_match_reference() {
        let [h1, l1] = noise(32.0, 2);
        let text = "detrend_median(kernel=101); whiten_adaptive(); metric_coherent(); trigger_multires()";
        let parsed = parse_dsl(text).unwrap();
        assert_eq!(parsed.canonical(), elite_dsl().canonical());
        assert_eq!(run_dsl(&parsed, &h1, &l1).unwrap(), crate::pipelines::elite_pipeline(&h1, &l1).unwrap());
        let seed = parse_dsl(&seed_dsl().canonical()).unwrap();
        assert_eq!(run_dsl(&seed, &h1, &l1).unwrap(), crate::pipelines::seed_pipeline(&h1, &l1).unwrap());
    }

    #[test]
    fn mismatched_channels_are_rejected() {
        let a = zeros(8.0);
        let b = SampledSeries::new(vec![0.0; a.len()], 1.0, a.dt).unwrap();
        assert!(run_dsl(seed_dsl(), &a, &b).is_err());
    }
}
