//! Glottal-source descriptors from sustained vowels: GCI timing variability,
//! opening quotient, normalized amplitude quotient, harmonic richness factor,
//! and flow-peak statistics, all derived from an IAIF flow reconstruction.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::{AudioSegment, SectionId};
use crate::dsp::{estimate_f0, inverse_filter, lpc, DspError, F0Config, F0Contour, Functionals, FUNCTIONAL_LABELS};

#[derive(Debug, Error)]
pub enum GlottalError {
    #[error("glottal features are defined only for sustained vowels, got {0:?}")]
    WrongSection(SectionId),
    #[error("insufficient voicing: need at least {needed_s} s voiced, got {got_s} s")]
    InsufficientVoicing { needed_s: f64, got_s: f64 },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Nine window-level descriptors, each summarized by the six functionals.
pub const GLOTTAL_DESCRIPTORS: [&str; 9] = [
    "gci var", "avg OQ", "var OQ", "avg NAQ", "var NAQ", "avg HRF", "var HRF",
    "avg flowPeak", "var flowPeak",
];

/// Minimum total voiced duration for glottal analysis, seconds.
pub const MIN_VOICED_S: f64 = 0.5;

/// Analysis window / hop over which the nine descriptors are computed before
/// the functionals summarize them.
const WINDOW_S: f64 = 0.5;
const WINDOW_HOP_S: f64 = 0.25;

/// Spectral sub-frame length / hop for the harmonic richness factor.
const HRF_FRAME_S: f64 = 0.2;
const HRF_HOP_S: f64 = 0.1;

/// Leak factor of the integrators that undo the differentiations in IAIF.
const LEAK: f64 = 0.99;

/// Lag-window bandwidth for the vocal-tract LPC fits: without it a
/// rate/1000 + 2 order fit locks onto individual harmonics of the periodic
/// source and whitens the glottal residual.
const VT_LAG_WINDOW_HZ: f64 = 200.0;

/// Glottal closure instants located as the most negative peaks of the
/// linear-prediction residual, one per expected period, searched within
/// +/-30% of the local 1/f0 spacing.
pub fn detect_gci(seg: &AudioSegment, contour: &F0Contour) -> Result<Vec<f64>, GlottalError> {
    let voiced_s = contour.voiced_count() as f64 * contour.hop_s;
    if voiced_s < MIN_VOICED_S {
        return Err(GlottalError::InsufficientVoicing { needed_s: MIN_VOICED_S, got_s: voiced_s });
    }
    let rate = seg.sample_rate as f64;
    let hop = (contour.hop_s * rate).round() as usize;
    let flen = (contour.frame_len_s * rate).round() as usize;
    let order = vt_order(seg.sample_rate);

    let mut gcis = Vec::new();
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
        if span_end <= span_start + 2 * order {
            continue;
        }
        let span = &seg.samples[span_start..span_end];
        let model = match lpc(span, order) {
            Ok(m) => m,
            Err(DspError::DegenerateFrame) => continue,
            Err(e) => return Err(e.into()),
        };
        let residual = inverse_filter(span, &model.coeffs);

        let local_period = |pos: usize| -> f64 {
            let t_s = (span_start + pos) as f64 / rate;
            let idx = ((t_s - contour.frame_len_s / 2.0) / contour.hop_s).round() as isize;
            let idx = idx.clamp(start_frame as isize, end_frame as isize) as usize;
            let f0 = contour.f0_hz[idx];
            if f0 > 0.0 {
                rate / f0
            } else {
                rate / 150.0
            }
        };
        let argmin = |lo: usize, hi: usize| -> usize {
            let mut best = lo;
            for j in lo + 1..hi {
                if residual[j] < residual[best] {
                    best = j;
                }
            }
            best
        };

        let p0 = local_period(0).ceil() as usize;
        if p0 + 1 >= residual.len() {
            continue;
        }
        // Skip the first period: the inverse filter has no history there.
        let mut last = argmin(p0 / 4, p0 + p0 / 4);
        gcis.push((span_start + last) as f64 / rate);
        loop {
            let p = local_period(last);
            let lo = (last as f64 + 0.7 * p).round() as usize;
            let hi = (last as f64 + 1.3 * p).round() as usize;
            if hi > residual.len() {
                break;
            }
            last = argmin(lo, hi);
            gcis.push((span_start + last) as f64 / rate);
        }
    }
    Ok(gcis)
}

/// IAIF output: the estimated glottal flow (leaky-integrated, trend-removed)
/// and the flow derivative (the final inverse-filter residual).
pub struct IaifOutput {
    pub flow: Vec<f64>,
    pub flow_derivative: Vec<f64>,
}

fn vt_order(rate: u32) -> usize {
    (rate / 1000 + 2) as usize
}

fn leaky_integrate(x: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    x.iter()
        .map(|&v| {
            acc = v + LEAK * acc;
            acc
        })
        .collect()
}

/// Subtract a centered moving mean; removes integrator drift and any trend
/// slower than one pitch period.
fn remove_trend(x: &[f64], win: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let half = win / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            x[i] - (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Two-pass iterative adaptive inverse filtering: (1) order-1 pre-emphasis
/// estimate of the glottal contribution, (2) vocal-tract LPC on the
/// de-glottalized signal, (3) inverse filter + integrate, (4) refine with a
/// glottal LPC of order 4.
pub fn iaif(seg: &AudioSegment) -> Result<IaifOutput, GlottalError> {
    let x = &seg.samples;
    let order = vt_order(seg.sample_rate);

    let rate = seg.sample_rate as f64;
    let vt_lpc = |v: &[f64]| crate::dsp::lpc_lag_windowed(v, order, VT_LAG_WINDOW_HZ, rate);

    // Pass 1: crude glottal model = order-1 LPC; remove it, fit the tract.
    let g1 = lpc(x, 1)?;
    let y1 = inverse_filter(x, &g1.coeffs);
    let vt1 = vt_lpc(&y1)?;
    let flow1 = leaky_integrate(&inverse_filter(x, &vt1.coeffs));

    // Pass 2: refine the glottal model on the first flow estimate, remove
    // it from the input, refit the tract, and invert once more.
    let g2 = lpc(&flow1, 4)?;
    let y2 = leaky_integrate(&inverse_filter(x, &g2.coeffs));
    let vt2 = vt_lpc(&y2)?;
    let flow_derivative = inverse_filter(x, &vt2.coeffs);
    let flow_raw = leaky_integrate(&flow_derivative);

    // Trend removal at just above the longest trackable pitch period.
    let win = (seg.sample_rate as f64 * 0.02).round() as usize;
    let flow = remove_trend(&flow_raw, win.max(3));
    Ok(IaifOutput { flow, flow_derivative })
}

/// Per-cycle glottal parameters between consecutive GCIs.
#[derive(Debug, Clone, Default)]
pub struct GlottalCycleParams {
    /// Cycle start GCIs, seconds, strictly increasing (one per cycle).
    pub gci_times_s: Vec<f64>,
    /// Opening quotient in (0, 1]: opening-phase duration (flow minimum to
    /// flow peak) over cycle duration.
    pub oq: Vec<f64>,
    /// Normalized amplitude quotient: peak-to-peak flow over
    /// |min flow derivative| x cycle duration.
    pub naq: Vec<f64>,
    /// Peak-to-peak flow amplitude per cycle.
    pub flow_p2p: Vec<f64>,
}

/// Compute per-cycle OQ / NAQ / flow peak from an IAIF flow and a GCI track.
pub fn cycle_params(
    iaif_out: &IaifOutput,
    gcis: &[f64],
    rate: f64,
) -> GlottalCycleParams {
    let flow = &iaif_out.flow;
    let dflow = &iaif_out.flow_derivative;
    let mut out = GlottalCycleParams::default();
    for w in gcis.windows(2) {
        let (t1, t2) = (w[0], w[1]);
        let i1 = (t1 * rate).round() as usize;
        let i2 = ((t2 * rate).round() as usize).min(flow.len());
        let period = t2 - t1;
        if i2 <= i1 + 4 || !(1.0 / 400.0..=1.0 / 60.0).contains(&period) {
            continue;
        }
        // Per-cycle linear detrend: residual integrator drift within one
        // cycle would otherwise tilt the closed phase and shift both the
        // apparent minimum and the opening onset.
        let raw = &flow[i1..i2];
        let m = raw.len() as f64;
        let xm = (m - 1.0) / 2.0;
        let ym = raw.iter().sum::<f64>() / m;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for (j, &v) in raw.iter().enumerate() {
            let dx = j as f64 - xm;
            sxy += dx * (v - ym);
            sxx += dx * dx;
        }
        let b = sxy / sxx;
        let cyc: Vec<f64> =
            raw.iter().enumerate().map(|(j, &v)| v - ym - b * (j as f64 - xm)).collect();
        let mut fmin = f64::INFINITY;
        let mut fmax = f64::NEG_INFINITY;
        let mut peak_at = 0;
        // The slice starts at the GCI, i.e. mid-fall of the previous pulse;
        // keep its apex out of the peak search.
        let guard = cyc.len() / 10;
        for (j, &v) in cyc.iter().enumerate() {
            if j >= guard && v > fmax {
                fmax = v;
                peak_at = j;
            }
            fmin = fmin.min(v);
        }
        let p2p = fmax - fmin;
        if !(p2p > 0.0) {
            continue;
        }
        // Opening onset: the last time before the peak that the flow
        // still sits at its minimum level (the per-cycle detrend makes the
        // closed phase flat enough for a 5% level rule).
        let thresh = fmin + 0.05 * p2p;
        let onset = (0..=peak_at).rev().find(|&j| cyc[j] <= thresh).unwrap_or(0);
        if peak_at <= onset {
            continue;
        }
        // Opening phase runs from the onset to the flow peak; the cycle
        // closes at the next GCI.
        let oq = ((peak_at - onset) as f64 / (i2 - i1) as f64).clamp(f64::MIN_POSITIVE, 1.0);
        let dmin = dflow[i1..i2].iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmin < 0.0) {
            continue;
        }
        let naq = p2p / (-dmin * (i2 - i1) as f64);
        out.gci_times_s.push(t1);
        out.oq.push(oq);
        out.naq.push(naq);
        out.flow_p2p.push(p2p);
    }
    out
}

/// Harmonic richness factor of one flow frame, dB: summed amplitudes of
/// harmonics 2..=11 (below Nyquist) over the F0 amplitude. Harmonic
/// amplitudes come from the nearest spectral bin with parabolic refinement.
fn hrf_db(frame: &[f64], rate: f64, f0: f64) -> Option<f64> {
    if frame.len() < 32 || f0 <= 0.0 {
        return None;
    }
    let nfft = (2 * frame.len()).next_power_of_two();
    let window = crate::dsp::hann_window(frame.len());
    let mut buf: Vec<Complex<f64>> = (0..nfft)
        .map(|i| Complex::new(if i < frame.len() { frame[i] * window[i] } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let mags: Vec<f64> = buf[..nfft / 2].iter().map(|c| c.norm()).collect();
    let bin_hz = rate / nfft as f64;

    // Refine F0 to the spectral peak near the tracker estimate so that the
    // k-th harmonic lookup stays on target for large k.
    let f0_bin = peak_near(&mags, f0 / bin_hz, f0 / (4.0 * bin_hz))?;
    let f0_ref = f0_bin * bin_hz;

    let amp_at = |freq_hz: f64| -> Option<f64> {
        let center = peak_near(&mags, freq_hz / bin_hz, 2.0)?;
        let b = center.round() as usize;
        if b == 0 || b + 1 >= mags.len() {
            return Some(mags[b.min(mags.len() - 1)]);
        }
        let (a, m, g) = (mags[b - 1], mags[b], mags[b + 1]);
        let den = a - 2.0 * m + g;
        if den.abs() < 1e-30 {
            return Some(m);
        }
        let d = 0.5 * (a - g) / den;
        Some(m - 0.25 * (a - g) * d)
    };

    let a1 = amp_at(f0_ref)?;
    if a1 <= 0.0 {
        return None;
    }
    let mut sum = 0.0;
    for k in 2..=11u32 {
        let f = k as f64 * f0_ref;
        if f >= 0.5 * rate {
            break;
        }
        sum += amp_at(f)?;
    }
    if sum <= 0.0 {
        return None;
    }
    Some(20.0 * (sum / a1).log10())
}

/// Index (fractional center bin) of the largest magnitude within
/// `half_width` bins of `bin`.
fn peak_near(mags: &[f64], bin: f64, half_width: f64) -> Option<f64> {
    let lo = ((bin - half_width).floor().max(1.0)) as usize;
    let hi = (((bin + half_width).ceil()) as usize).min(mags.len().saturating_sub(1));
    if lo >= hi {
        return None;
    }
    let mut best = lo;
    for j in lo + 1..hi {
        if mags[j] > mags[best] {
            best = j;
        }
    }
    Some(best as f64)
}

/// The 54 per-section glottal features: nine window-level descriptors, each
/// summarized by the six functionals. Keys are `"global <functional>
/// <descriptor>"`, e.g. `"global avg avg HRF"`. Defined only for the
/// sustained vowels.
pub fn glottal_features(
    seg: &AudioSegment,
    cfg: &F0Config,
) -> Result<BTreeMap<String, f64>, GlottalError> {
    if !matches!(seg.section, SectionId::S2VowelA | SectionId::S3VowelI) {
        return Err(GlottalError::WrongSection(seg.section));
    }
    let contour = estimate_f0(seg, cfg)?;
    let gcis = detect_gci(seg, &contour)?;
    let iaif_out = iaif(seg)?;
    let rate = seg.sample_rate as f64;
    let cycles = cycle_params(&iaif_out, &gcis, rate);

    // HRF stream over spectral sub-frames centered on voiced frames.
    let hrf_len = (HRF_FRAME_S * rate).round() as usize;
    let hrf_hop = (HRF_HOP_S * rate).round() as usize;
    let mut hrf_times = Vec::new();
    let mut hrf_vals = Vec::new();
    let mut start = 0;
    while start + hrf_len <= iaif_out.flow.len() {
        let center_s = (start + hrf_len / 2) as f64 / rate;
        let fi = ((center_s - contour.frame_len_s / 2.0) / contour.hop_s).round().max(0.0) as usize;
        if contour.is_voiced(fi) {
            if let Some(h) = hrf_db(&iaif_out.flow[start..start + hrf_len], rate, contour.f0_hz[fi]) {
                hrf_times.push(center_s);
                hrf_vals.push(h);
            }
        }
        start += hrf_hop;
    }

    // Descriptor values per analysis window.
    let duration_s = seg.samples.len() as f64 / rate;
    let mut rows: [Vec<f64>; 9] = Default::default();
    let mut w0 = 0.0;
    while w0 + WINDOW_S <= duration_s + 1e-9 {
        let w1 = w0 + WINDOW_S;
        let in_window = |t: f64| t >= w0 && t < w1;
        let idx: Vec<usize> =
            (0..cycles.gci_times_s.len()).filter(|&i| in_window(cycles.gci_times_s[i])).collect();
        let gci_in: Vec<f64> = gcis.iter().cloned().filter(|&t| in_window(t)).collect();
        let hrf_in: Vec<f64> = (0..hrf_vals.len())
            .filter(|&i| in_window(hrf_times[i]))
            .map(|i| hrf_vals[i])
            .collect();
        w0 += WINDOW_HOP_S;
        if idx.len() < 2 || gci_in.len() < 3 || hrf_in.is_empty() {
            continue;
        }
        let take = |v: &[f64]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
        let intervals: Vec<f64> = gci_in.windows(2).map(|w| w[1] - w[0]).collect();
        rows[0].push(std_pop(&intervals));
        let oq = take(&cycles.oq);
        rows[1].push(mean(&oq));
        rows[2].push(var_pop(&oq));
        let naq = take(&cycles.naq);
        rows[3].push(mean(&naq));
        rows[4].push(var_pop(&naq));
        rows[5].push(mean(&hrf_in));
        rows[6].push(var_pop(&hrf_in));
        let p2p = take(&cycles.flow_p2p);
        rows[7].push(mean(&p2p));
        rows[8].push(var_pop(&p2p));
    }

    let mut out = BTreeMap::new();
    for (d, name) in GLOTTAL_DESCRIPTORS.iter().enumerate() {
        let functionals =
            if rows[d].is_empty() { None } else { Functionals::compute(&rows[d]).ok() };
        for (fi, flabel) in FUNCTIONAL_LABELS.iter().enumerate() {
            let value = functionals.map_or(f64::NAN, |f| f.as_array()[fi]);
            out.insert(format!("global {flabel} {name}"), value);
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn std_pop(v: &[f64]) -> f64 {
    var_pop(v).sqrt()
}
