//! Suprasegmental descriptors over voiced segments: F0-contour linear-fit
//! tilt and MSE, energy-contour tilt, first/last-segment energy, voiced rate,
//! and duration/pause statistics. Not defined for conversational speech.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::audio::{AudioSegment, SectionId};
use crate::dsp::{
    estimate_f0, frame_signal, linear_fit, short_time_log_energy, DspError, F0Config, F0Contour,
    Functionals, FUNCTIONAL_LABELS,
};

#[derive(Debug, Error)]
pub enum ProsodyError {
    #[error("prosody features are not defined for conversational speech ({0:?})")]
    WrongSection(SectionId),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Minimum voiced run length, frames; shorter runs are tracker flicker.
pub const MIN_RUN_FRAMES: usize = 3;

/// Per-segment descriptors summarized by the six functionals. Functional and
/// descriptor are concatenated without a separator ("skwtiltEvoiced").
pub const PROSODY_SEGMENT_DESCRIPTORS: [&str; 3] = ["tilt", "mseEvoiced", "tiltEvoiced"];

/// Scalar (whole-section) descriptors.
pub const PROSODY_SCALARS: [&str; 8] = [
    "firstEvoiced",
    "lastEvoiced",
    "voicedRate",
    "avgdurvoiced",
    "stddurvoiced",
    "avgdurpause",
    "stddurpause",
    "voicedFraction",
];

/// One maximal run of voiced frames with its tracks.
#[derive(Debug, Clone)]
pub struct VoicedSegment {
    pub start_s: f64,
    pub end_s: f64,
    /// Per-frame F0, Hz; all > 0.
    pub f0_track: Vec<f64>,
    /// Per-frame log energy, dB.
    pub energy_track: Vec<f64>,
    /// Frame index range [first, last] in the contour.
    pub frames: (usize, usize),
}

/// Maximal runs of consecutive voiced frames, discarding runs shorter than
/// [`MIN_RUN_FRAMES`]. `energy_db` must be frame-synchronous with `f0`.
pub fn voiced_segments(f0: &F0Contour, energy_db: &[f64]) -> Vec<VoicedSegment> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < f0.f0_hz.len() {
        if !f0.is_voiced(i) {
            i += 1;
            continue;
        }
        let first = i;
        while i < f0.f0_hz.len() && f0.is_voiced(i) {
            i += 1;
        }
        let last = i - 1;
        if last - first + 1 < MIN_RUN_FRAMES {
            continue;
        }
        out.push(VoicedSegment {
            start_s: first as f64 * f0.hop_s,
            end_s: last as f64 * f0.hop_s + f0.frame_len_s,
            f0_track: f0.f0_hz[first..=last].to_vec(),
            energy_track: energy_db[first..=last.min(energy_db.len() - 1)].to_vec(),
            frames: (first, last),
        });
    }
    out
}

/// Prosody feature map for sections 1-3. Per-voiced-segment descriptors
/// (F0 tilt in Hz/s, F0-fit MSE in Hz^2, energy tilt in dB/s) are summarized
/// by the six functionals with keys `"<functional><descriptor>"` (no space,
/// e.g. `"skwtiltEvoiced"`), followed by eight whole-section scalars. All
/// values are NaN sentinels when no voiced segment survives.
pub fn prosody_features(
    seg: &AudioSegment,
    cfg: &F0Config,
) -> Result<BTreeMap<String, f64>, ProsodyError> {
    if seg.section == SectionId::S4Conversation {
        return Err(ProsodyError::WrongSection(seg.section));
    }
    let contour = estimate_f0(seg, cfg)?;
    let energy: Vec<f64> = frame_signal(&seg.samples, seg.sample_rate, cfg.frame_len_s, cfg.hop_s)
        .into_iter()
        .map(short_time_log_energy)
        .collect();
    let segments = voiced_segments(&contour, &energy);

    let mut out = BTreeMap::new();

    // Per-segment linear-fit descriptors.
    let mut tilt = Vec::new();
    let mut mse = Vec::new();
    let mut etilt = Vec::new();
    for s in &segments {
        let times: Vec<f64> =
            (s.frames.0..=s.frames.1).map(|i| contour.frame_center_s(i)).collect();
        if let Ok((slope, _, m)) = linear_fit(&times, &s.f0_track) {
            tilt.push(slope);
            mse.push(m);
        }
        if let Ok((slope, _, _)) = linear_fit(&times[..s.energy_track.len()], &s.energy_track) {
            etilt.push(slope);
        }
    }
    for (name, values) in
        [("tilt", &tilt), ("mseEvoiced", &mse), ("tiltEvoiced", &etilt)]
    {
        let functionals =
            if values.is_empty() { None } else { Functionals::compute(values).ok() };
        for (fi, flabel) in FUNCTIONAL_LABELS.iter().enumerate() {
            let value = functionals.map_or(f64::NAN, |f| f.as_array()[fi]);
            out.insert(format!("{flabel}{name}"), value);
        }
    }

    // Whole-section scalars.
    let duration_s = seg.samples.len() as f64 / seg.sample_rate as f64;
    let seg_energy = |s: &VoicedSegment| -> f64 {
        s.energy_track.iter().sum::<f64>() / s.energy_track.len().max(1) as f64
    };
    let voiced_durs: Vec<f64> = segments.iter().map(|s| s.end_s - s.start_s).collect();
    let pauses: Vec<f64> = segments
        .windows(2)
        .map(|w| (w[1].start_s - w[0].end_s).max(0.0))
        .collect();
    let scalars: [f64; 8] = if segments.is_empty() {
        [f64::NAN; 8]
    } else {
        let total_voiced: f64 = voiced_durs.iter().sum();
        [
            seg_energy(&segments[0]),
            seg_energy(segments.last().unwrap()),
            segments.len() as f64 / duration_s,
            mean(&voiced_durs),
            std_pop(&voiced_durs),
            if pauses.is_empty() { f64::NAN } else { mean(&pauses) },
            if pauses.is_empty() { f64::NAN } else { std_pop(&pauses) },
            (total_voiced / duration_s).min(1.0),
        ]
    };
    for (name, value) in PROSODY_SCALARS.iter().zip(scalars) {
        out.insert((*name).to_string(), value);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}
