//! Frame-level vocal-fold stability descriptors: F0 derivatives, jitter,
//! shimmer, amplitude/pitch perturbation quotients and log-energy, each
//! summarized by the six functionals over the voiced frames of a section.
//!
//! Cycle boundaries are reconstructed from the F0 contour: waveform peaks are
//! picked at roughly one-period spacing inside each voiced run and refined to
//! sub-sample precision by parabolic interpolation, which keeps the
//! perturbation measures well below the sample-grid quantization floor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::audio::AudioSegment;
use crate::dsp::{estimate_f0, short_time_log_energy, DspError, F0Config, F0Contour, Functionals, FUNCTIONAL_LABELS};

#[derive(Debug, Error)]
pub enum PhonationError {
    #[error("too few cycles: need at least {needed}, got {got}")]
    TooFewCycles { needed: usize, got: usize },
    #[error("invalid amplitude: cycle amplitudes must be positive")]
    InvalidAmplitude,
    #[error("invalid period: pitch periods must be positive")]
    InvalidPeriod,
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Descriptor labels in registry order.
pub const PHONATION_DESCRIPTORS: [&str; 7] =
    ["df0", "ddf0", "jitter", "shimmer", "apq", "ppq", "logE"];

/// Neighborhood size for the perturbation quotients.
pub const DEFAULT_QUOTIENT_K: usize = 5;

/// Local jitter: mean(|T_i - T_{i-1}|) / mean(T) * 100.
pub fn jitter(periods_s: &[f64]) -> Result<f64, PhonationError> {
    if periods_s.len() < 2 {
        return Err(PhonationError::TooFewCycles { needed: 2, got: periods_s.len() });
    }
    if periods_s.iter().any(|&t| t <= 0.0) {
        return Err(PhonationError::InvalidPeriod);
    }
    Ok(relative_consecutive_diff(periods_s))
}

/// Local shimmer: mean(|A_i - A_{i-1}|) / mean(A) * 100.
pub fn shimmer(amplitudes: &[f64]) -> Result<f64, PhonationError> {
    if amplitudes.iter().any(|&a| a <= 0.0) {
        return Err(PhonationError::InvalidAmplitude);
    }
    if amplitudes.len() < 2 {
        return Err(PhonationError::TooFewCycles { needed: 2, got: amplitudes.len() });
    }
    Ok(relative_consecutive_diff(amplitudes))
}

fn relative_consecutive_diff(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mad = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        / (values.len() - 1) as f64;
    mad / mean * 100.0
}

/// Amplitude perturbation quotient: mean deviation of each cycle amplitude
/// from its k-point neighborhood average (truncated at the ends), relative
/// to the mean amplitude, in percent.
pub fn apq(amplitudes: &[f64], k: usize) -> Result<f64, PhonationError> {
    if amplitudes.iter().any(|&a| a <= 0.0) {
        return Err(PhonationError::InvalidAmplitude);
    }
    perturbation_quotient(amplitudes, k)
}

/// Pitch perturbation quotient: the period analogue of [`apq`].
pub fn ppq(periods_s: &[f64], k: usize) -> Result<f64, PhonationError> {
    if periods_s.iter().any(|&t| t <= 0.0) {
        return Err(PhonationError::InvalidPeriod);
    }
    perturbation_quotient(periods_s, k)
}

fn perturbation_quotient(values: &[f64], k: usize) -> Result<f64, PhonationError> {
    if values.len() < k {
        return Err(PhonationError::TooFewCycles { needed: k, got: values.len() });
    }
    let n = values.len();
    let h = k / 2;
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h + 1).min(n);
        let local = values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        acc += (values[i] - local).abs();
    }
    Ok(acc / n as f64 / mean * 100.0)
}

/// Cycle marks for one voiced run: sub-sample peak positions (in samples)
/// and the interpolated |peak| amplitude of each cycle.
#[derive(Debug, Clone)]
pub struct CycleRun {
    pub marks: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Frame index range [first, last] of the run in the contour.
    pub frames: (usize, usize),
}

impl CycleRun {
    pub fn periods_s(&self, rate: f64) -> Vec<f64> {
        self.marks.windows(2).map(|w| (w[1] - w[0]) / rate).collect()
    }
}

/// Pick per-cycle waveform peaks inside every voiced run of the contour.
pub fn cycle_marks(seg: &AudioSegment, contour: &F0Contour) -> Vec<CycleRun> {
    let rate = seg.sample_rate as f64;
    let hop = (contour.hop_s * rate).round() as usize;
    let flen = (contour.frame_len_s * rate).round() as usize;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < contour.f0_hz.len() {
        if !contour.is_voiced(i) {
            i += 1;
            continue;
        }
        let start_frame = i;
        while i < contour.f0_hz.len() && contour.is_voiced(i) {
            i += 1;
        }
        let end_frame = i - 1;
        let span_start = start_frame * hop;
        let span_end = (end_frame * hop + flen).min(seg.samples.len());
        if let Some(run) = trace_run(seg, contour, span_start, span_end, start_frame, end_frame) {
            runs.push(run);
        }
    }
    runs
}

fn trace_run(
    seg: &AudioSegment,
    contour: &F0Contour,
    span_start: usize,
    span_end: usize,
    start_frame: usize,
    end_frame: usize,
) -> Option<CycleRun> {
    let rate = seg.sample_rate as f64;
    let x = &seg.samples;
    let local_period = |pos: f64| -> f64 {
        // Period from the voiced frame whose center is nearest this position.
        let t_s = pos / rate;
        let idx = ((t_s - contour.frame_len_s / 2.0) / contour.hop_s).round() as isize;
        let idx = idx.clamp(start_frame as isize, end_frame as isize) as usize;
        let f0 = if contour.is_voiced(idx) { contour.f0_hz[idx] } else { 0.0 };
        if f0 > 0.0 {
            rate / f0
        } else {
            rate / 150.0
        }
    };

    let argmax_abs = |lo: usize, hi: usize| -> Option<usize> {
        if lo >= hi || hi > x.len() {
            return None;
        }
        let mut best = lo;
        for j in lo + 1..hi {
            if x[j].abs() > x[best].abs() {
                best = j;
            }
        }
        Some(best)
    };

    // Refine every near-tied local maximum of |x| in [lo, hi): the true
    // (continuous) peak can sit between samples on a lobe whose sampled
    // height loses the discrete argmax by a hair, and which lobe wins
    // flips from cycle to cycle.
    let refine_in_range = |lo: usize, hi: usize, top: usize| -> (f64, f64) {
        let (mut best_m, mut best_a) = refine_peak(x, top);
        let thresh = 0.9 * x[top].abs();
        for j in lo.max(1)..hi.min(x.len() - 1) {
            let v = x[j].abs();
            if j != top && v >= thresh && v >= x[j - 1].abs() && v >= x[j + 1].abs() {
                let (m, a) = refine_peak(x, j);
                if a > best_a {
                    best_a = a;
                    best_m = m;
                }
            }
        }
        (best_m, best_a)
    };

    let p0 = local_period(span_start as f64);
    let first_hi = span_start + p0.ceil() as usize;
    if first_hi > span_end {
        return None;
    }
    let first = argmax_abs(span_start, first_hi)?;
    let mut marks = Vec::new();
    let mut amplitudes = Vec::new();
    let (m, a) = refine_in_range(span_start, first_hi, first);
    marks.push(m);
    amplitudes.push(a);
    loop {
        let last = *marks.last().unwrap();
        let p = local_period(last);
        let lo = (last + 0.7 * p).round() as usize;
        let hi = (last + 1.3 * p).round() as usize;
        if hi > span_end {
            // A truncated window need not contain a true cycle peak; its
            // argmax would be an arbitrary low sample and poison shimmer.
            break;
        }
        match argmax_abs(lo, hi) {
            Some(peak) => {
                let (m, a) = refine_in_range(lo, hi, peak);
                if m <= *marks.last().unwrap() {
                    break;
                }
                marks.push(m);
                amplitudes.push(a);
            }
            None => break,
        }
    }
    if marks.len() < 2 {
        return None;
    }
    Some(CycleRun { marks, amplitudes, frames: (start_frame, end_frame) })
}

/// Sub-sample refinement of a peak of |x| by windowed-sinc interpolation on
/// a fine grid around the sample-grid maximum. Returns (position, |peak|).
/// A parabola is not accurate enough here: the waveform has content close to
/// Nyquist and shimmer-level (<1%) amplitude precision is required.
fn refine_peak(x: &[f64], idx: usize) -> (f64, f64) {
    const HALF_TAPS: isize = 32;
    const STEPS: usize = 64;
    // Slightly below-Nyquist cutoff, matching the resampler kernel: a
    // full-band truncated sinc has too much error near Nyquist.
    const FC: f64 = 0.95 * 0.5;
    if idx < HALF_TAPS as usize + 1 || idx + HALF_TAPS as usize + 2 >= x.len() {
        return (idx as f64, x[idx].abs());
    }
    let interp = |t: f64| -> f64 {
        let center = t.round() as isize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in center - HALF_TAPS..=center + HALF_TAPS {
            let d = t - k as f64;
            let sinc = if d.abs() < 1e-12 {
                2.0 * FC
            } else {
                (2.0 * std::f64::consts::PI * FC * d).sin() / (std::f64::consts::PI * d)
            };
            let w = 0.5 + 0.5 * (std::f64::consts::PI * d / (HALF_TAPS as f64 + 1.0)).cos();
            acc += sinc * w * x[k as usize];
            wsum += sinc * w;
        }
        if wsum.abs() > 1e-12 {
            acc / wsum
        } else {
            acc
        }
    };
    let mut best_t = idx as f64;
    let mut best_a = x[idx].abs();
    for s in 0..=2 * STEPS {
        let t = idx as f64 + (s as f64 - STEPS as f64) / STEPS as f64;
        let a = interp(t).abs();
        if a > best_a {
            best_a = a;
            best_t = t;
        }
    }
    (best_t, best_a)
}

/// Per-voiced-frame values of the seven phonation descriptors. Entries are
/// NaN where a descriptor is undefined for that frame (e.g. too few cycles
/// in reach of the perturbation quotients).
pub struct PhonationDescriptors {
    /// `frames[d][j]` = descriptor d at voiced frame j.
    pub per_frame: [Vec<f64>; 7],
}

pub fn phonation_descriptors(seg: &AudioSegment, cfg: &F0Config) -> Result<PhonationDescriptors, PhonationError> {
    let contour = estimate_f0(seg, cfg)?;
    let runs = cycle_marks(seg, &contour);
    let rate = seg.sample_rate as f64;
    let hop = (cfg.hop_s * rate).round() as usize;
    let flen = (cfg.frame_len_s * rate).round() as usize;

    let mut per_frame: [Vec<f64>; 7] = Default::default();

    for run in &runs {
        let periods = run.periods_s(rate);
        let (first, last) = run.frames;
        for fi in first..=last {
            if !contour.is_voiced(fi) {
                continue;
            }
            // F0 derivatives within the run (0 at run edges).
            let f0 = contour.f0_hz[fi];
            let df0 = if fi > first && contour.is_voiced(fi - 1) {
                f0 - contour.f0_hz[fi - 1]
            } else {
                0.0
            };
            let ddf0 = if fi > first + 1 && contour.is_voiced(fi - 1) && contour.is_voiced(fi - 2) {
                f0 - 2.0 * contour.f0_hz[fi - 1] + contour.f0_hz[fi - 2]
            } else {
                0.0
            };

            let frame_start = fi * hop;
            let frame_end = frame_start + flen;
            let (cyc_lo, cyc_hi) =
                cycles_for_frame(&run.marks, frame_start as f64, frame_end as f64, DEFAULT_QUOTIENT_K + 1);
            let amps = &run.amplitudes[cyc_lo..cyc_hi];
            let pers = &periods[cyc_lo..cyc_hi.saturating_sub(1).max(cyc_lo)];

            let jit = jitter(pers).unwrap_or(f64::NAN);
            let shi = shimmer(amps).unwrap_or(f64::NAN);
            let apq_v = apq(amps, DEFAULT_QUOTIENT_K).unwrap_or(f64::NAN);
            let ppq_v = ppq(pers, DEFAULT_QUOTIENT_K).unwrap_or(f64::NAN);
            let log_e = if frame_end <= seg.samples.len() {
                short_time_log_energy(&seg.samples[frame_start..frame_end])
            } else {
                f64::NAN
            };

            per_frame[0].push(df0);
            per_frame[1].push(ddf0);
            per_frame[2].push(jit);
            per_frame[3].push(shi);
            per_frame[4].push(apq_v);
            per_frame[5].push(ppq_v);
            per_frame[6].push(log_e);
        }
    }
    Ok(PhonationDescriptors { per_frame })
}

/// Index range of cycle marks overlapping the frame, widened symmetrically
/// to at least `min_marks` marks when the run allows it.
fn cycles_for_frame(marks: &[f64], frame_start: f64, frame_end: f64, min_marks: usize) -> (usize, usize) {
    let mut lo = marks.partition_point(|&m| m < frame_start);
    let mut hi = marks.partition_point(|&m| m < frame_end);
    while hi - lo < min_marks && (lo > 0 || hi < marks.len()) {
        if lo > 0 {
            lo -= 1;
        }
        if hi - lo < min_marks && hi < marks.len() {
            hi += 1;
        }
    }
    (lo, hi)
}

/// The 42 per-section phonation features: each descriptor summarized by the
/// six functionals. Keys are `"<functional> <descriptor>"`, e.g. `"avg apq"`.
/// All values are NaN (the missing sentinel) when the section has no voiced
/// frames.
pub fn phonation_features(seg: &AudioSegment, cfg: &F0Config) -> Result<BTreeMap<String, f64>, PhonationError> {
    let desc = phonation_descriptors(seg, cfg)?;
    let mut out = BTreeMap::new();
    for (d, name) in PHONATION_DESCRIPTORS.iter().enumerate() {
        let clean: Vec<f64> = desc.per_frame[d].iter().cloned().filter(|v| v.is_finite()).collect();
        let functionals = if clean.is_empty() {
            None
        } else {
            Functionals::compute(&clean).ok()
        };
        for (fi, flabel) in FUNCTIONAL_LABELS.iter().enumerate() {
            let value = functionals.map_or(f64::NAN, |f| f.as_array()[fi]);
            out.insert(format!("{flabel} {name}"), value);
        }
    }
    Ok(out)
}
