//! Recording and cohort ingestion: RIFF/WAVE PCM parsing, stereo-to-mono
//! folding, band-limited resampling, and the JSON-lines cohort manifest.
//!
//! Amplitudes are normalized only by the fixed 1/32768 integer scale — no
//! per-file peak normalization — so shimmer-type measures reflect the
//! recorded dynamics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt header in {0}: {1}")]
    CorruptHeader(PathBuf, String),
    #[error("unsupported format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("empty audio: {0}")]
    EmptyAudio(PathBuf),
    #[error("invalid sample rate {0}")]
    InvalidRate(i64),
    #[error("patient {patient_id} is missing section {section}")]
    MissingSection { patient_id: String, section: SectionId },
    #[error("duplicate patient id {0}")]
    DuplicatePatientId(String),
    #[error("label {label} out of range for patient {patient_id}")]
    LabelOutOfRange { patient_id: String, label: i64 },
    #[error("manifest line {line}: {detail}")]
    BadManifestLine { line: usize, detail: String },
    #[error("nt_probnp for patient {0} must be finite and >= 0")]
    BadClinicalValue(String),
}

/// The four CAPE-V recording sections, ordinal 1..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionId {
    S1Sentences,
    S2VowelA,
    S3VowelI,
    S4Conversation,
}

impl SectionId {
    pub const ALL: [SectionId; 4] = [
        SectionId::S1Sentences,
        SectionId::S2VowelA,
        SectionId::S3VowelI,
        SectionId::S4Conversation,
    ];

    pub fn ordinal(self) -> u8 {
        match self {
            SectionId::S1Sentences => 1,
            SectionId::S2VowelA => 2,
            SectionId::S3VowelI => 3,
            SectionId::S4Conversation => 4,
        }
    }

    pub fn from_ordinal(n: u8) -> Option<SectionId> {
        if n == 0 {
            return None;
        }
        SectionId::ALL.get(n as usize - 1).copied()
    }

    /// File prefix used in canonical feature names, e.g. "Section2.wav".
    pub fn file_name(self) -> String {
        format!("Section{}.wav", self.ordinal())
    }

    pub fn is_sustained_vowel(self) -> bool {
        matches!(self, SectionId::S2VowelA | SectionId::S3VowelI)
    }
}

impl fmt::Display for SectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Section{}", self.ordinal())
    }
}

/// Mono PCM samples in [-1, 1] with their rate and CAPE-V section identity.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub section: SectionId,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, sample_rate: u32, section: SectionId) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate(0));
        }
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio(PathBuf::from("<memory>")));
        }
        Ok(AudioSegment { samples, sample_rate, section })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone)]
pub struct PatientRecord {
    pub patient_id: String,
    pub sections: BTreeMap<SectionId, AudioSegment>,
    pub label: u8,
    pub nt_probnp: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub patients: Vec<PatientRecord>,
    pub source_manifest: PathBuf,
}

impl Cohort {
    pub fn labels(&self) -> Vec<u8> {
        self.patients.iter().map(|p| p.label).collect()
    }
}

/// One manifest line:
/// `{"patient_id": "...", "sections": {"1": "a.wav", ...}, "label": 0|1, "nt_probnp": number|null}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub sections: BTreeMap<String, String>,
    pub label: i64,
    #[serde(default)]
    pub nt_probnp: Option<f64>,
}

/// Read a RIFF/WAVE file: linear PCM, 16-bit, 1 or 2 channels. Stereo is
/// averaged to mono; integer samples are scaled by 1/32768.
pub fn load_wav(path: &Path, section: SectionId) -> Result<AudioSegment, AudioError> {
    let mut file = File::open(path).map_err(|source| AudioError::Io { path: path.into(), source })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|source| AudioError::Io { path: path.into(), source })?;
    decode_wav(&bytes, path, section)
}

fn decode_wav(bytes: &[u8], path: &Path, section: SectionId) -> Result<AudioSegment, AudioError> {
    let corrupt = |detail: &str| AudioError::CorruptHeader(path.into(), detail.into());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupt("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format tag, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(corrupt("chunk overruns file"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(corrupt("fmt chunk too short"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1); // chunks are word-aligned
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| corrupt("missing fmt chunk"))?;
    let unsupported = |detail: String| AudioError::UnsupportedFormat { path: path.into(), detail };
    if tag != 1 {
        return Err(unsupported(format!("format tag {tag}, expected PCM (1)")));
    }
    if bits != 16 {
        return Err(unsupported(format!("{bits} bits per sample, expected 16")));
    }
    if !(1..=2).contains(&channels) {
        return Err(unsupported(format!("{channels} channels, expected 1 or 2")));
    }
    if rate == 0 {
        return Err(AudioError::InvalidRate(0));
    }
    let data = data.ok_or_else(|| corrupt("missing data chunk"))?;
    let frame_bytes = 2 * channels as usize;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(AudioError::EmptyAudio(path.into()));
    }
    let mut samples = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let off = i * frame_bytes + 2 * c;
            let v = i16::from_le_bytes([data[off], data[off + 1]]);
            acc += v as f64 / 32768.0;
        }
        samples.push(acc / channels as f64);
    }
    Ok(AudioSegment { samples, sample_rate: rate, section })
}

/// Write a mono 16-bit PCM WAV. Samples are clipped to [-1, 1] and scaled
/// by 32768 (inverse of the load scale, so round trips are lossless for
/// values that originated from 16-bit PCM).
pub fn write_wav(path: &Path, seg: &AudioSegment) -> Result<(), AudioError> {
    let io_err = |source| AudioError::Io { path: path.into(), source };
    let n = seg.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&seg.sample_rate.to_le_bytes());
    out.extend_from_slice(&(seg.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &seg.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

/// Band-limited (windowed-sinc) resampling. Identity when the rates match;
/// duration is preserved within one sample period.
pub fn resample(seg: &AudioSegment, target_rate: u32) -> Result<AudioSegment, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(target_rate as i64));
    }
    if target_rate == seg.sample_rate {
        return Ok(seg.clone());
    }
    let src_rate = seg.sample_rate as f64;
    let dst_rate = target_rate as f64;
    let ratio = dst_rate / src_rate;
    let n_out = ((seg.samples.len() as f64) * ratio).round().max(1.0) as usize;
    // Cutoff at the smaller Nyquist, with a little margin for the window rolloff.
    let cutoff = 0.95 * 0.5 * src_rate.min(dst_rate);
    let half_taps = 32usize;
    let x = &seg.samples;
    let mut out = Vec::with_capacity(n_out);
    let fc = cutoff / src_rate; // normalized to source rate
    for m in 0..n_out {
        let t = m as f64 / ratio; // position in source samples
        let center = t.floor() as isize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in -(half_taps as isize)..=(half_taps as isize) {
            let idx = center + k;
            if idx < 0 || idx as usize >= x.len() {
                continue;
            }
            let d = t - idx as f64;
            let sinc = if d.abs() < 1e-12 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * d).sin() / (std::f64::consts::PI * d)
            };
            // Hann window over the tap span.
            let w = 0.5 + 0.5 * (std::f64::consts::PI * d / (half_taps as f64 + 1.0)).cos();
            let tap = sinc * w;
            acc += tap * x[idx as usize];
            wsum += tap;
        }
        // Normalize by the tap sum: unity DC gain, corrects edge truncation.
        out.push(if wsum.abs() > 1e-12 { acc / wsum } else { acc });
    }
    Ok(AudioSegment { samples: out, sample_rate: target_rate, section: seg.section })
}

/// Load a JSON-lines cohort manifest. Section paths are resolved relative to
/// the manifest's directory. Patient order follows file order.
pub fn load_cohort(manifest_path: &Path) -> Result<Cohort, AudioError> {
    let file = File::open(manifest_path)
        .map_err(|source| AudioError::Io { path: manifest_path.into(), source })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut patients = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AudioError::Io { path: manifest_path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| AudioError::BadManifestLine { line: lineno + 1, detail: e.to_string() })?;
        if !seen.insert(entry.patient_id.clone()) {
            return Err(AudioError::DuplicatePatientId(entry.patient_id));
        }
        if !(0..=1).contains(&entry.label) {
            return Err(AudioError::LabelOutOfRange {
                patient_id: entry.patient_id,
                label: entry.label,
            });
        }
        if let Some(v) = entry.nt_probnp {
            if !v.is_finite() || v < 0.0 {
                return Err(AudioError::BadClinicalValue(entry.patient_id));
            }
        }
        let mut sections = BTreeMap::new();
        for section in SectionId::ALL {
            let key = section.ordinal().to_string();
            let rel = entry.sections.get(&key).ok_or_else(|| AudioError::MissingSection {
                patient_id: entry.patient_id.clone(),
                section,
            })?;
            let seg = load_wav(&base.join(rel), section)?;
            sections.insert(section, seg);
        }
        patients.push(PatientRecord {
            patient_id: entry.patient_id,
            sections,
            label: entry.label as u8,
            nt_probnp: entry.nt_probnp,
        });
    }
    Ok(Cohort { patients, source_manifest: manifest_path.into() })
}
