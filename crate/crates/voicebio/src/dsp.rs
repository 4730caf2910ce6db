//! Shared signal primitives: framing, autocorrelation pitch tracking with a
//! voicing decision, short-time energy, linear prediction (Levinson-Durbin),
//! least-squares line fitting, and the six statistical functionals that
//! summarize every frame-level descriptor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioSegment;

/// Energy floor inside the log so digital silence maps to -100 dB.
pub const ENERGY_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid f0 band [{0}, {1}] Hz for sample rate {2}")]
    InvalidBand(f64, f64, u32),
    #[error("degenerate frame: zero energy")]
    DegenerateFrame,
    #[error("degenerate abscissa: all x values equal")]
    DegenerateAbscissa,
    #[error("empty input")]
    EmptyInput,
    #[error("lpc order {order} infeasible for frame of {len} samples")]
    BadOrder { order: usize, len: usize },
}

/// Frame-synchronous fundamental-frequency track. `0.0` encodes unvoiced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Contour {
    pub f0_hz: Vec<f64>,
    pub hop_s: f64,
    pub frame_len_s: f64,
}

impl F0Contour {
    pub fn is_voiced(&self, i: usize) -> bool {
        self.f0_hz.get(i).is_some_and(|&f| f > 0.0)
    }

    pub fn voiced_count(&self) -> usize {
        self.f0_hz.iter().filter(|&&f| f > 0.0).count()
    }

    /// Time of the center of frame `i`, in seconds.
    pub fn frame_center_s(&self, i: usize) -> f64 {
        i as f64 * self.hop_s + self.frame_len_s / 2.0
    }
}

/// Pitch-tracker settings. Defaults: 40 ms frames, 20 ms hop, 60-400 Hz band,
/// voicing threshold 0.45 on normalized autocorrelation, silence floor at
/// max(-60 dBFS, median frame energy - 30 dB).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Config {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub voicing_threshold: f64,
    pub silence_floor_dbfs: f64,
    pub silence_rel_db: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        F0Config {
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            frame_len_s: 0.04,
            hop_s: 0.02,
            voicing_threshold: 0.45,
            silence_floor_dbfs: -60.0,
            silence_rel_db: 30.0,
        }
    }
}

/// The six statistical functionals applied to every frame-level descriptor.
///
/// Population moments; skewness and kurtosis (excess) of a constant sequence
/// are defined as 0 so downstream matrices stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub avg: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Canonical functional labels, in registry order.
pub const FUNCTIONAL_LABELS: [&str; 6] = ["avg", "std", "max", "min", "skw", "kurt"];

impl Functionals {
    pub fn compute(values: &[f64]) -> Result<Functionals, DspError> {
        if values.is_empty() {
            return Err(DspError::EmptyInput);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        let mut m4 = 0.0;
        for &v in values {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skewness, kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Functionals {
            avg: mean,
            std: m2.sqrt(),
            max,
            min,
            skewness,
            kurtosis,
        })
    }

    /// Values in the same order as [`FUNCTIONAL_LABELS`].
    pub fn as_array(&self) -> [f64; 6] {
        [self.avg, self.std, self.max, self.min, self.skewness, self.kurtosis]
    }
}

/// Contiguous frame views at hop offsets. Frame count is
/// floor((N - L) / H) + 1 for N >= L, else 0.
pub fn frame_signal(samples: &[f64], rate: u32, frame_len_s: f64, hop_s: f64) -> Vec<&[f64]> {
    let l = (frame_len_s * rate as f64).round() as usize;
    let h = (hop_s * rate as f64).round() as usize;
    frame_signal_samples(samples, l, h)
}

pub fn frame_signal_samples(samples: &[f64], frame_len: usize, hop: usize) -> Vec<&[f64]> {
    if frame_len == 0 || hop == 0 || samples.len() < frame_len {
        return Vec::new();
    }
    let count = (samples.len() - frame_len) / hop + 1;
    (0..count).map(|i| &samples[i * hop..i * hop + frame_len]).collect()
}

/// 10*log10(mean(x^2) + eps), in dB relative to full scale.
pub fn short_time_log_energy(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 10.0 * ENERGY_EPS.log10();
    }
    let ms = frame.iter().map(|&x| x * x).sum::<f64>() / frame.len() as f64;
    10.0 * (ms + ENERGY_EPS).log10()
}

pub fn hann_window(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![1.0; len];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Per-frame normalized-autocorrelation pitch with a voicing decision.
///
/// A frame is voiced iff the autocorrelation peak in the lag band
/// [rate/f0_max, rate/f0_min] reaches `voicing_threshold` and the frame
/// energy clears the silence floor. The peak lag is refined by parabolic
/// interpolation before conversion to Hz.
pub fn estimate_f0(seg: &AudioSegment, cfg: &F0Config) -> Result<F0Contour, DspError> {
    let rate = seg.sample_rate as f64;
    if !(cfg.f0_min_hz > 0.0 && cfg.f0_min_hz < cfg.f0_max_hz && cfg.f0_max_hz < rate / 2.0) {
        return Err(DspError::InvalidBand(cfg.f0_min_hz, cfg.f0_max_hz, seg.sample_rate));
    }
    let frames = frame_signal(&seg.samples, seg.sample_rate, cfg.frame_len_s, cfg.hop_s);
    let lag_min = (rate / cfg.f0_max_hz).floor().max(1.0) as usize;
    let lag_max = (rate / cfg.f0_min_hz).ceil() as usize;

    let energies: Vec<f64> = frames.iter().map(|f| short_time_log_energy(f)).collect();
    let floor_db = {
        let mut sorted = energies.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = if sorted.is_empty() {
            cfg.silence_floor_dbfs
        } else {
            sorted[sorted.len() / 2]
        };
        cfg.silence_floor_dbfs.max(median - cfg.silence_rel_db)
    };

    let mut f0_hz = Vec::with_capacity(frames.len());
    for (frame, &energy) in frames.iter().zip(&energies) {
        f0_hz.push(frame_f0(frame, rate, lag_min, lag_max, cfg, energy, floor_db));
    }
    Ok(F0Contour {
        f0_hz,
        hop_s: cfg.hop_s,
        frame_len_s: cfg.frame_len_s,
    })
}

fn frame_f0(
    frame: &[f64],
    rate: f64,
    lag_min: usize,
    lag_max: usize,
    cfg: &F0Config,
    energy_db: f64,
    floor_db: f64,
) -> f64 {
    if energy_db < floor_db || lag_max + 1 >= frame.len() {
        return 0.0;
    }
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let window = hann_window(frame.len());
    let w: Vec<f64> = frame.iter().zip(&window).map(|(&x, &h)| (x - mean) * h).collect();
    let r0: f64 = w.iter().map(|&x| x * x).sum();
    if r0 <= 0.0 {
        return 0.0;
    }
    let autocorr = |lag: usize| -> f64 {
        w.iter().zip(&w[lag..]).map(|(&a, &b)| a * b).sum::<f64>() / r0
    };
    let mut best_lag = lag_min;
    let mut best_val = f64::NEG_INFINITY;
    for lag in lag_min..=lag_max {
        let v = autocorr(lag);
        if v > best_val {
            best_val = v;
            best_lag = lag;
        }
    }
    if best_val < cfg.voicing_threshold {
        return 0.0;
    }
    // Parabolic refinement around the peak lag.
    let mut lag = best_lag as f64;
    if best_lag > lag_min && best_lag < lag_max {
        let (ym, y0, yp) = (autocorr(best_lag - 1), best_val, autocorr(best_lag + 1));
        let denom = ym - 2.0 * y0 + yp;
        if denom.abs() > 1e-30 {
            let delta = 0.5 * (ym - yp) / denom;
            if delta.abs() <= 1.0 {
                lag += delta;
            }
        }
    }
    (rate / lag).clamp(cfg.f0_min_hz, cfg.f0_max_hz)
}

/// Linear-prediction coefficients from Levinson-Durbin on the frame
/// autocorrelation. `coeffs[i]` weights `x[n-1-i]` in the predictor
/// `x_hat[n] = sum_i coeffs[i] * x[n-1-i]`; the residual is `x - x_hat`.
///
/// Reflection coefficients are clamped to |k| <= 1 - 1e-6 so the synthesis
/// filter stays minimum-phase. The caller is expected to pre-window.
#[derive(Debug, Clone)]
pub struct LpcResult {
    pub coeffs: Vec<f64>,
    pub reflections: Vec<f64>,
    /// Per-sample prediction-error energy from the recursion.
    pub error: f64,
    /// Zero-lag autocorrelation (per-sample frame energy).
    pub r0: f64,
}

pub fn lpc(frame: &[f64], order: usize) -> Result<LpcResult, DspError> {
    lpc_lag_windowed(frame, order, 0.0, 0.0)
}

/// LPC with optional lag-windowed autocorrelation: each lag k is scaled by
/// exp(-0.5 (2 pi bandwidth_hz k / rate)^2), broadening spectral peaks so a
/// high-order fit tracks the envelope instead of individual harmonics.
/// `bandwidth_hz = 0` disables the window (plain autocorrelation LPC).
pub fn lpc_lag_windowed(
    frame: &[f64],
    order: usize,
    bandwidth_hz: f64,
    rate: f64,
) -> Result<LpcResult, DspError> {
    if order == 0 || frame.len() <= order {
        return Err(DspError::BadOrder { order, len: frame.len() });
    }
    let n = frame.len() as f64;
    let mut r = vec![0.0; order + 1];
    for (lag, rl) in r.iter_mut().enumerate() {
        *rl = frame.iter().zip(&frame[lag..]).map(|(&a, &b)| a * b).sum::<f64>() / n;
        if bandwidth_hz > 0.0 {
            let w = 2.0 * std::f64::consts::PI * bandwidth_hz * lag as f64 / rate;
            *rl *= (-0.5 * w * w).exp();
        }
    }
    if r[0] <= 0.0 || !r[0].is_finite() {
        return Err(DspError::DegenerateFrame);
    }
    let mut a = vec![0.0; order];
    let mut reflections = Vec::with_capacity(order);
    let mut err = r[0];
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let mut k = acc / err;
        let kmax = 1.0 - 1e-6;
        k = k.clamp(-kmax, kmax);
        reflections.push(k);
        let prev = a[..i].to_vec();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
    }
    Ok(LpcResult { coeffs: a, reflections, error: err, r0: r[0] })
}

/// Residual of the LPC analysis filter applied with zero initial history.
pub fn inverse_filter(samples: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    for n in 0..samples.len() {
        let mut pred = 0.0;
        for (i, &c) in coeffs.iter().enumerate() {
            if n > i {
                pred += c * samples[n - 1 - i];
            }
        }
        out.push(samples[n] - pred);
    }
    out
}

/// Least-squares line: returns (slope, intercept, mean squared residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64), DspError> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(DspError::EmptyInput);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(DspError::DegenerateAbscissa);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mse = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n;
    Ok((slope, intercept, mse))
}
