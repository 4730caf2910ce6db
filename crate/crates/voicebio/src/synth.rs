//! Source-filter synthetic voice and cohort generation.
//!
//! A glottal pulse train (triangular approximation with a controllable open
//! quotient) with per-cycle period and amplitude perturbations is filtered
//! through cascaded formant resonators, with optional additive noise and
//! voiced/silent pause patterning. The generator records per-cycle ground
//! truth (closure instants, periods, amplitudes), which the extractor tests
//! use as their oracle. Everything is a pure function of the spec and seed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav, AudioError, AudioSegment, Cohort, PatientRecord, SectionId};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] AudioError),
}

/// Glottal flow pulse shape within the open phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseShape {
    /// Linear rise over most of the open phase, sharp fall at closure.
    /// Rich in harmonics, gives a strong excitation spike at the GCI.
    Triangular,
    /// Raised-cosine bump: a weak harmonic structure above F0.
    Smooth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f0_hz: f64,
    /// When set, F0 sweeps linearly from `f0_hz` to this value.
    #[serde(default)]
    pub f0_end_hz: Option<f64>,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    /// Open quotient: open-phase duration / cycle duration, in (0, 1).
    pub oq: f64,
    #[serde(default = "default_pulse_shape")]
    pub pulse_shape: PulseShape,
    /// Formant resonators as (center Hz, bandwidth Hz).
    pub formants: Vec<(f64, f64)>,
    pub duration_s: f64,
    /// Alternating (voiced_s, silent_s) spans, cycled; empty = fully voiced.
    #[serde(default)]
    pub pause_pattern: Vec<(f64, f64)>,
    /// Signal-to-noise ratio; `inf` (the default) means noiseless.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

fn default_pulse_shape() -> PulseShape {
    PulseShape::Triangular
}

fn default_snr() -> f64 {
    f64::INFINITY
}

impl SynthSpec {
    /// Sustained-vowel defaults: 150 Hz, clean, /a/-like formants, 16 kHz.
    pub fn vowel(duration_s: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            f0_hz: 150.0,
            f0_end_hz: None,
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            oq: 0.6,
            pulse_shape: PulseShape::Triangular,
            // Generous bandwidths so resonator tails decay well within one
            // cycle; narrow formants leak ringing across jittered cycle
            // boundaries and show up as spurious shimmer.
            formants: vec![(660.0, 320.0), (1720.0, 380.0), (2500.0, 440.0)],
            duration_s,
            pause_pattern: Vec::new(),
            snr_db: f64::INFINITY,
            sample_rate: 16000,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(60.0..=400.0).contains(&self.f0_hz) {
            return bad(format!("f0 {} outside [60, 400] Hz", self.f0_hz));
        }
        if let Some(f) = self.f0_end_hz {
            if !(60.0..=400.0).contains(&f) {
                return bad(format!("f0_end {f} outside [60, 400] Hz"));
            }
        }
        if self.jitter_pct < 0.0 || self.shimmer_pct < 0.0 {
            return bad("jitter/shimmer must be >= 0".into());
        }
        if !(0.05..=0.95).contains(&self.oq) {
            return bad(format!("oq {} outside (0.05, 0.95)", self.oq));
        }
        if self.duration_s <= 0.0 {
            return bad("duration must be positive".into());
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        Ok(())
    }
}

/// Per-cycle ground truth recorded during synthesis.
#[derive(Debug, Clone, Default)]
pub struct SynthTruth {
    /// Glottal closure instants, seconds, strictly increasing.
    pub gci_times_s: Vec<f64>,
    /// Realized cycle periods, seconds.
    pub periods_s: Vec<f64>,
    /// Realized per-cycle source amplitudes (before the vocal-tract filter).
    pub amplitudes: Vec<f64>,
}

pub fn synth_voice(spec: &SynthSpec, section: SectionId) -> Result<AudioSegment, SynthError> {
    synth_voice_detailed(spec, section).map(|(seg, _)| seg)
}

/// Noiseless glottal flow implied by a realized cycle track, band-limited
/// and sampled at the spec's delivery rate exactly like the generator output;
/// the oracle inverse-filtering tests compare against.
pub fn true_flow(spec: &SynthSpec, truth: &SynthTruth, n: usize) -> Vec<f64> {
    const OVERSAMPLE: u32 = 8;
    let rate = (spec.sample_rate * OVERSAMPLE) as f64;
    let n_os = n * OVERSAMPLE as usize;
    let mut flow = vec![0.0f64; n_os];
    for i in 0..truth.gci_times_s.len() {
        let period = truth.periods_s[i];
        let start = truth.gci_times_s[i] - period;
        let base_period = match spec.f0_end_hz {
            Some(end) => {
                let f0 = spec.f0_hz
                    + (end - spec.f0_hz) * (start / spec.duration_s).clamp(0.0, 1.0);
                1.0 / f0
            }
            None => 1.0 / spec.f0_hz,
        };
        let fall_u = 0.04 * spec.oq * base_period / period;
        let amp = truth.amplitudes[i];
        let n0 = (start * rate).ceil().max(0.0) as usize;
        let n1 = (((start + period) * rate).ceil() as usize).min(n_os);
        for j in n0..n1 {
            let u = (j as f64 / rate - start) / period;
            flow[j] += amp * pulse_flow_with_fall(u, spec.oq, fall_u, spec.pulse_shape);
        }
    }
    let seg = AudioSegment {
        samples: flow,
        sample_rate: spec.sample_rate * OVERSAMPLE,
        section: SectionId::S2VowelA,
    };
    let mut out = crate::audio::resample(&seg, spec.sample_rate)
        .expect("decimation cannot fail")
        .samples;
    out.truncate(n);
    out.resize(n, 0.0);
    out
}

/// Synthesize and return the per-cycle ground truth alongside the audio.
pub fn synth_voice_detailed(
    spec: &SynthSpec,
    section: SectionId,
) -> Result<(AudioSegment, SynthTruth), SynthError> {
    spec.validate()?;
    // Render the source oversampled, then decimate: the sharp glottal fall
    // is not band-limited and would otherwise alias into cycle-to-cycle
    // amplitude noise at shimmer-measurement level.
    const OVERSAMPLE: u32 = 8;
    let rate = (spec.sample_rate * OVERSAMPLE) as f64;
    let n = (spec.duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut flow = vec![0.0f64; n];
    let mut truth = SynthTruth::default();

    let f0_at = |t_s: f64| -> f64 {
        match spec.f0_end_hz {
            Some(end) => spec.f0_hz + (end - spec.f0_hz) * (t_s / spec.duration_s).clamp(0.0, 1.0),
            None => spec.f0_hz,
        }
    };

    // Voiced intervals in seconds.
    let voiced: Vec<(f64, f64)> = if spec.pause_pattern.is_empty() {
        vec![(0.0, spec.duration_s)]
    } else {
        let mut spans = Vec::new();
        let mut t = 0.0;
        let mut i = 0;
        while t < spec.duration_s {
            let (v, s) = spec.pause_pattern[i % spec.pause_pattern.len()];
            let v_end = (t + v).min(spec.duration_s);
            if v_end > t {
                spans.push((t, v_end));
            }
            t = v_end + s;
            i += 1;
        }
        spans
    };

    let jitter_frac = spec.jitter_pct / 100.0;
    let shimmer_frac = spec.shimmer_pct / 100.0;
    let unit = Normal::new(0.0, 1.0).unwrap();

    for &(v_start, v_end) in &voiced {
        let mut t = v_start; // cycle start, seconds
        loop {
            let base_period = 1.0 / f0_at(t);
            let mut period = base_period * (1.0 + jitter_frac * unit.sample(&mut rng));
            period = period.clamp(0.5 * base_period, 1.5 * base_period);
            if t + period > v_end {
                break;
            }
            let amp = (1.0 + shimmer_frac * unit.sample(&mut rng)).max(0.05);
            let fall_u = 0.04 * spec.oq * base_period / period;
            render_cycle(&mut flow, rate, t, period, amp, spec.oq, fall_u, spec.pulse_shape);
            truth.gci_times_s.push(t + period);
            truth.periods_s.push(period);
            truth.amplitudes.push(amp);
            t += period;
        }
    }

    // Flow derivative as the excitation: first difference of the sampled
    // continuous flow, so pulse energy is independent of sub-sample phase.
    let mut y = vec![0.0f64; n];
    for i in 1..n {
        y[i] = flow[i] - flow[i - 1];
    }
    for &(center, bw) in &spec.formants {
        let r = (-PI * bw / rate).exp();
        let c = 2.0 * r * (2.0 * PI * center / rate).cos();
        let r2 = -r * r;
        let mut y1 = 0.0;
        let mut y2 = 0.0;
        for v in y.iter_mut() {
            let out = *v + c * y1 + r2 * y2;
            y2 = y1;
            y1 = out;
            *v = out;
        }
    }

    // Decimate to the requested rate before adding noise, so the noise
    // stays white over the delivered band.
    let os_seg = AudioSegment { samples: y, sample_rate: spec.sample_rate * OVERSAMPLE, section };
    let mut y = crate::audio::resample(&os_seg, spec.sample_rate)
        .expect("decimation of a validated spec cannot fail")
        .samples;

    // Additive white noise at the requested SNR relative to the signal RMS.
    if spec.snr_db.is_finite() {
        let rms = (y.iter().map(|&v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        let noise_std = rms * 10f64.powf(-spec.snr_db / 20.0);
        for v in y.iter_mut() {
            *v += noise_std * unit.sample(&mut rng);
        }
    }

    // Uniform scale to 0.5 peak; ratios (jitter, shimmer, OQ, HRF) unaffected.
    let peak = y.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if peak > 0.0 {
        let g = 0.5 / peak;
        for v in y.iter_mut() {
            *v *= g;
        }
    }

    let seg = AudioSegment { samples: y, sample_rate: spec.sample_rate, section };
    Ok((seg, truth))
}

/// Add one glottal flow pulse to the flow buffer by evaluating the
/// continuous pulse at integer sample times. Cycle layout in phase
/// u = (t - start)/period: closed for u < 1-oq, then the open phase.
/// `fall_u` is the closing-fall length in phase units; callers hold its
/// absolute duration constant so jittered periods keep the same edge
/// sharpness (otherwise period perturbations bleed into peak amplitude).
fn render_cycle(
    flow: &mut [f64],
    rate: f64,
    start_s: f64,
    period_s: f64,
    amp: f64,
    oq: f64,
    fall_u: f64,
    shape: PulseShape,
) {
    let n0 = (start_s * rate).ceil() as usize;
    let n1 = (((start_s + period_s) * rate).ceil() as usize).min(flow.len());
    for n in n0..n1 {
        let u = (n as f64 / rate - start_s) / period_s;
        flow[n] += amp * pulse_flow_with_fall(u, oq, fall_u, shape);
    }
}

/// Continuous glottal flow value at phase `u` in [0,1); used by tests that
/// need the analytic flow rather than the rendered derivative.
pub fn pulse_flow(u: f64, oq: f64, shape: PulseShape) -> f64 {
    pulse_flow_with_fall(u, oq, 0.04 * oq, shape)
}

fn pulse_flow_with_fall(u: f64, oq: f64, fall_u: f64, shape: PulseShape) -> f64 {
    let closed = 1.0 - oq;
    if u < closed {
        return 0.0;
    }
    match shape {
        PulseShape::Triangular => {
            let fall = fall_u.clamp(0.01 * oq, 0.5 * oq);
            let rise = oq - fall;
            if u < closed + rise {
                (u - closed) / rise
            } else {
                ((1.0 - u) / fall).max(0.0)
            }
        }
        PulseShape::Smooth => {
            let v = (u - closed) / oq;
            0.5 * (1.0 - (2.0 * PI * v).cos())
        }
    }
}

/// Per-parameter normal distribution, clamped to the parameter's valid range
/// at sampling time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamDist {
    pub mean: f64,
    pub sd: f64,
}

impl ParamDist {
    pub fn fixed(mean: f64) -> ParamDist {
        ParamDist { mean, sd: 0.0 }
    }

    fn sample(&self, rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
        if self.sd == 0.0 {
            return self.mean.clamp(lo, hi);
        }
        let n = Normal::new(self.mean, self.sd).unwrap();
        n.sample(rng).clamp(lo, hi)
    }
}

/// Distribution of voice parameters for one class of patients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub f0_hz: ParamDist,
    pub jitter_pct: ParamDist,
    pub shimmer_pct: ParamDist,
    pub oq: ParamDist,
    /// Optional planted clinical column (e.g. an NT-proBNP analogue).
    #[serde(default)]
    pub nt_probnp: Option<ParamDist>,
}

impl ClassSpec {
    pub fn baseline() -> ClassSpec {
        ClassSpec {
            f0_hz: ParamDist { mean: 140.0, sd: 15.0 },
            jitter_pct: ParamDist { mean: 1.0, sd: 0.3 },
            shimmer_pct: ParamDist { mean: 2.0, sd: 0.5 },
            oq: ParamDist { mean: 0.55, sd: 0.05 },
            nt_probnp: None,
        }
    }

    /// A clearly pathological counterpart to [`ClassSpec::baseline`].
    pub fn separated() -> ClassSpec {
        ClassSpec {
            f0_hz: ParamDist { mean: 140.0, sd: 15.0 },
            jitter_pct: ParamDist { mean: 4.0, sd: 0.5 },
            shimmer_pct: ParamDist { mean: 6.0, sd: 1.0 },
            oq: ParamDist { mean: 0.75, sd: 0.05 },
            nt_probnp: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub class0: ClassSpec,
    pub class1: ClassSpec,
    /// Fraction of patients labeled 0.
    pub label_balance: f64,
    pub seed: u64,
    /// Desk-scale section durations (seconds) for sections 1..4.
    #[serde(default = "default_durations")]
    pub section_durations_s: [f64; 4],
}

fn default_durations() -> [f64; 4] {
    [4.0, 2.0, 2.0, 4.0]
}

impl CohortSpec {
    pub fn new(n_patients: usize, class0: ClassSpec, class1: ClassSpec, seed: u64) -> CohortSpec {
        CohortSpec {
            n_patients,
            class0,
            class1,
            label_balance: 0.5,
            seed,
            section_durations_s: default_durations(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n_patients < 4 {
            return Err(SynthError::InvalidSpec("cohort needs at least 4 patients".into()));
        }
        if !(self.label_balance > 0.0 && self.label_balance < 1.0) {
            return Err(SynthError::InvalidSpec("label_balance must be in (0, 1)".into()));
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derived seed for patient `index`: cohort seed XOR a hash of the index.
pub fn patient_seed(cohort_seed: u64, index: usize) -> u64 {
    cohort_seed ^ splitmix64(index as u64 + 1)
}

/// Synthesize one patient: four CAPE-V sections from voice parameters drawn
/// out of the class distributions.
pub fn synth_patient(
    class: &ClassSpec,
    label: u8,
    patient_id: &str,
    durations_s: [f64; 4],
    seed: u64,
) -> Result<PatientRecord, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = class.f0_hz.sample(&mut rng, 70.0, 350.0);
    let jitter = class.jitter_pct.sample(&mut rng, 0.0, 15.0);
    let shimmer = class.shimmer_pct.sample(&mut rng, 0.0, 30.0);
    let oq = class.oq.sample(&mut rng, 0.2, 0.9);
    let nt_probnp = class.nt_probnp.map(|d| d.sample(&mut rng, 0.0, f64::INFINITY));

    let mut spec = SynthSpec::vowel(1.0, 0);
    spec.f0_hz = f0;
    spec.jitter_pct = jitter;
    spec.shimmer_pct = shimmer;
    spec.oq = oq;
    spec.snr_db = 35.0;

    let mut sections = BTreeMap::new();
    for (i, section) in SectionId::ALL.into_iter().enumerate() {
        let mut s = spec.clone();
        s.duration_s = durations_s[i];
        s.seed = splitmix64(seed ^ (i as u64 + 1));
        s.pause_pattern = match section {
            SectionId::S1Sentences => vec![(0.45, 0.25), (0.6, 0.3)],
            SectionId::S4Conversation => vec![(0.5, 0.35), (0.4, 0.5)],
            _ => Vec::new(),
        };
        sections.insert(section, synth_voice(&s, section)?);
    }
    Ok(PatientRecord { patient_id: patient_id.to_string(), sections, label, nt_probnp })
}

/// Generate an in-memory cohort. Labels: the first round(n * balance)
/// patients are class 0, the rest class 1.
pub fn synth_cohort(spec: &CohortSpec) -> Result<Cohort, SynthError> {
    spec.validate()?;
    let n0 = (spec.n_patients as f64 * spec.label_balance).round() as usize;
    let mut patients = Vec::with_capacity(spec.n_patients);
    for i in 0..spec.n_patients {
        let label = u8::from(i >= n0);
        let class = if label == 0 { &spec.class0 } else { &spec.class1 };
        let id = format!("synth{:03}", i + 1);
        patients.push(synth_patient(
            class,
            label,
            &id,
            spec.section_durations_s,
            patient_seed(spec.seed, i),
        )?);
    }
    Ok(Cohort { patients, source_manifest: PathBuf::from("<synthetic>") })
}

/// Generate a cohort and write its WAV files plus a JSON-lines manifest
/// under `out_dir`. Returns the manifest path.
pub fn write_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<PathBuf, SynthError> {
    let cohort = synth_cohort(spec)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|source| AudioError::Io { path: out_dir.into(), source })?;
    let manifest_path = out_dir.join("cohort.jsonl");
    let mut manifest = File::create(&manifest_path)
        .map_err(|source| AudioError::Io { path: manifest_path.clone(), source })?;
    for p in &cohort.patients {
        let mut sections = serde_json::Map::new();
        for (section, seg) in &p.sections {
            let rel = format!("{}_Section{}.wav", p.patient_id, section.ordinal());
            write_wav(&out_dir.join(&rel), seg)?;
            sections.insert(section.ordinal().to_string(), serde_json::Value::String(rel));
        }
        let line = serde_json::json!({
            "patient_id": p.patient_id,
            "sections": sections,
            "label": p.label,
            "nt_probnp": p.nt_probnp,
        });
        writeln!(manifest, "{line}")
            .map_err(|source| AudioError::Io { path: manifest_path.clone(), source })?;
    }
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{estimate_f0, F0Config};

    #[test]
    fn same_seed_bit_identical() {
        let spec = SynthSpec { jitter_pct: 2.0, shimmer_pct: 3.0, snr_db: 30.0, ..SynthSpec::vowel(0.5, 42) };
        let a = synth_voice(&spec, SectionId::S2VowelA).unwrap();
        let b = synth_voice(&spec, SectionId::S2VowelA).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn clean_vowel_f0_in_band() {
        let (seg, truth) = synth_voice_detailed(&SynthSpec::vowel(1.0, 1), SectionId::S2VowelA).unwrap();
        let contour = estimate_f0(&seg, &F0Config::default()).unwrap();
        let voiced: Vec<f64> = contour.f0_hz.iter().cloned().filter(|&f| f > 0.0).collect();
        assert!(!voiced.is_empty());
        let near = voiced.iter().filter(|&&f| (148.0..=152.0).contains(&f)).count();
        assert!(near as f64 >= 0.9 * voiced.len() as f64, "{near}/{}", voiced.len());
        // Truth is internally consistent: ~150 cycles per second.
        assert!((truth.gci_times_s.len() as f64 - 150.0).abs() < 10.0);
        for w in truth.gci_times_s.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SynthSpec::vowel(1.0, 0);
        s.f0_hz = 30.0;
        assert!(matches!(synth_voice(&s, SectionId::S2VowelA), Err(SynthError::InvalidSpec(_))));
        let mut s = SynthSpec::vowel(1.0, 0);
        s.jitter_pct = -1.0;
        assert!(synth_voice(&s, SectionId::S2VowelA).is_err());
        let mut s = SynthSpec::vowel(1.0, 0);
        s.oq = 0.99;
        assert!(synth_voice(&s, SectionId::S2VowelA).is_err());
    }

    #[test]
    fn pause_pattern_produces_silent_gaps() {
        let spec = SynthSpec {
            pause_pattern: vec![(0.3, 0.2)],
            ..SynthSpec::vowel(1.5, 5)
        };
        let seg = synth_voice(&spec, SectionId::S1Sentences).unwrap();
        // Sample the middle of the first silent span (0.3..0.5 s): the tail
        // of the resonator decays fast, so 0.45 s onward is near-silent.
        let a = (0.45 * 16000.0) as usize;
        let b = (0.5 * 16000.0) as usize;
        let peak = seg.samples[a..b].iter().cloned().fold(0.0f64, |x, y| x.max(y.abs()));
        assert!(peak < 1e-3, "pause peak {peak}");
    }

    #[test]
    fn cohort_respects_balance_and_determinism() {
        let spec = CohortSpec {
            label_balance: 15.0 / 29.0,
            ..CohortSpec::new(29, ClassSpec::baseline(), ClassSpec::separated(), 7)
        };
        let cohort = synth_cohort(&spec).unwrap();
        assert_eq!(cohort.patients.len(), 29);
        let zeros = cohort.patients.iter().filter(|p| p.label == 0).count();
        assert_eq!(zeros, 15);
        let again = synth_cohort(&spec).unwrap();
        for (a, b) in cohort.patients.iter().zip(&again.patients) {
            assert_eq!(
                a.sections[&SectionId::S2VowelA].samples,
                b.sections[&SectionId::S2VowelA].samples
            );
        }
    }

    #[test]
    fn written_cohort_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec {
            n_patients: 4,
            section_durations_s: [0.8, 0.5, 0.5, 0.8],
            ..CohortSpec::new(4, ClassSpec::baseline(), ClassSpec::separated(), 3)
        };
        let manifest = write_cohort(&spec, dir.path()).unwrap();
        let loaded = crate::audio::load_cohort(&manifest).unwrap();
        assert_eq!(loaded.patients.len(), 4);
        assert!(loaded.patients.iter().all(|p| p.sections.len() == 4));
    }
}
