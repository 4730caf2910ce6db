//! Feature registry, section routing, per-patient extraction, cohort matrix
//! assembly, median imputation, and clinical-column fusion.
//!
//! Canonical feature names read `"SectionN.wav/<family>/<tail>"`, e.g.
//! `"Section2.wav/phonation/avg apq"`. Missing values carry a NaN sentinel
//! until imputation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{AudioSegment, Cohort, PatientRecord, SectionId};
use crate::dsp::{F0Config, FUNCTIONAL_LABELS};
use crate::glottal::{glottal_features, GLOTTAL_DESCRIPTORS};
use crate::phonation::{phonation_features, PHONATION_DESCRIPTORS};
use crate::prosody::{prosody_features, PROSODY_SCALARS, PROSODY_SEGMENT_DESCRIPTORS};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot parse feature name {0:?}")]
    BadName(String),
    #[error("cohort contains a single class only")]
    SingleClassCohort,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no column named {0:?}")]
    NoSuchColumn(String),
    #[error("clinical values must be finite")]
    NonFiniteClinical,
    #[error("malformed matrix CSV at line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
}

/// Feature family; routing decides which sections each family covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Glottal,
    Phonation,
    Prosody,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Glottal => "glottal",
            Family::Phonation => "phonation",
            Family::Prosody => "prosody",
        }
    }

    /// Sections the family is extracted from.
    pub fn sections(self) -> &'static [SectionId] {
        match self {
            Family::Glottal => &[SectionId::S2VowelA, SectionId::S3VowelI],
            Family::Phonation => &SectionId::ALL,
            Family::Prosody => {
                &[SectionId::S1Sentences, SectionId::S2VowelA, SectionId::S3VowelI]
            }
        }
    }
}

pub const FAMILIES: [Family; 3] = [Family::Glottal, Family::Phonation, Family::Prosody];

/// A parsed canonical feature name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FeatureName {
    pub section: SectionId,
    pub family: Family,
    /// Summary functional label; empty for whole-section prosody scalars.
    pub functional: String,
    pub descriptor: String,
}

impl FeatureName {
    /// Tail of the canonical name after `"SectionN.wav/<family>/"`; matches
    /// the keys of the per-section extractor maps.
    pub fn tail(&self) -> String {
        match self.family {
            Family::Glottal => format!("global {} {}", self.functional, self.descriptor),
            Family::Phonation => format!("{} {}", self.functional, self.descriptor),
            Family::Prosody => format!("{}{}", self.functional, self.descriptor),
        }
    }

    pub fn render(&self) -> String {
        format!("{}/{}/{}", self.section.file_name(), self.family.as_str(), self.tail())
    }

    pub fn parse(name: &str) -> Result<FeatureName, FeatureError> {
        let bad = || FeatureError::BadName(name.to_string());
        let mut parts = name.splitn(3, '/');
        let section_s = parts.next().ok_or_else(bad)?;
        let family_s = parts.next().ok_or_else(bad)?;
        let tail = parts.next().ok_or_else(bad)?;
        let section = SectionId::ALL
            .into_iter()
            .find(|s| s.file_name() == section_s)
            .ok_or_else(bad)?;
        let family = FAMILIES
            .into_iter()
            .find(|f| f.as_str() == family_s)
            .ok_or_else(bad)?;
        if !family.sections().contains(&section) {
            return Err(bad());
        }
        let (functional, descriptor) = match family {
            Family::Glottal => {
                let rest = tail.strip_prefix("global ").ok_or_else(bad)?;
                let (f, d) = rest.split_once(' ').ok_or_else(bad)?;
                if !FUNCTIONAL_LABELS.contains(&f) || !GLOTTAL_DESCRIPTORS.contains(&d) {
                    return Err(bad());
                }
                (f.to_string(), d.to_string())
            }
            Family::Phonation => {
                let (f, d) = tail.split_once(' ').ok_or_else(bad)?;
                if !FUNCTIONAL_LABELS.contains(&f) || !PHONATION_DESCRIPTORS.contains(&d) {
                    return Err(bad());
                }
                (f.to_string(), d.to_string())
            }
            Family::Prosody => {
                if PROSODY_SCALARS.contains(&tail) {
                    (String::new(), tail.to_string())
                } else {
                    FUNCTIONAL_LABELS
                        .iter()
                        .find_map(|f| {
                            tail.strip_prefix(f).and_then(|d| {
                                PROSODY_SEGMENT_DESCRIPTORS
                                    .contains(&d)
                                    .then(|| (f.to_string(), d.to_string()))
                            })
                        })
                        .ok_or_else(bad)?
                }
            }
        };
        Ok(FeatureName { section, family, functional, descriptor })
    }
}

/// The deterministic ordered feature registry: for every section in ordinal
/// order, families in fixed order, descriptors and functionals in their
/// declared orders. Identical across runs and platforms.
pub fn registry() -> Vec<FeatureName> {
    let mut names = Vec::new();
    for section in SectionId::ALL {
        for family in FAMILIES {
            if !family.sections().contains(&section) {
                continue;
            }
            match family {
                Family::Glottal => {
                    for d in GLOTTAL_DESCRIPTORS {
                        for f in FUNCTIONAL_LABELS {
                            names.push(FeatureName {
                                section,
                                family,
                                functional: f.to_string(),
                                descriptor: d.to_string(),
                            });
                        }
                    }
                }
                Family::Phonation => {
                    for d in PHONATION_DESCRIPTORS {
                        for f in FUNCTIONAL_LABELS {
                            names.push(FeatureName {
                                section,
                                family,
                                functional: f.to_string(),
                                descriptor: d.to_string(),
                            });
                        }
                    }
                }
                Family::Prosody => {
                    for d in PROSODY_SEGMENT_DESCRIPTORS {
                        for f in FUNCTIONAL_LABELS {
                            names.push(FeatureName {
                                section,
                                family,
                                functional: f.to_string(),
                                descriptor: d.to_string(),
                            });
                        }
                    }
                    for d in PROSODY_SCALARS {
                        names.push(FeatureName {
                            section,
                            family,
                            functional: String::new(),
                            descriptor: d.to_string(),
                        });
                    }
                }
            }
        }
    }
    names
}

fn section_family_map(seg: &AudioSegment, family: Family, cfg: &F0Config) -> BTreeMap<String, f64> {
    // Any extraction failure (silence, too little voicing) degrades to
    // sentinels; imputation fills them later.
    match family {
        Family::Glottal => glottal_features(seg, cfg).unwrap_or_default(),
        Family::Phonation => phonation_features(seg, cfg).unwrap_or_default(),
        Family::Prosody => prosody_features(seg, cfg).unwrap_or_default(),
    }
}

/// Extract the full registry-ordered feature vector for one patient.
/// Unvoiced or failed extractions carry the NaN sentinel.
pub fn extract_patient(record: &PatientRecord, cfg: &F0Config) -> Vec<f64> {
    let names = registry();
    let mut maps: BTreeMap<(SectionId, Family), BTreeMap<String, f64>> = BTreeMap::new();
    for section in SectionId::ALL {
        let Some(seg) = record.sections.get(&section) else { continue };
        for family in FAMILIES {
            if family.sections().contains(&section) {
                maps.insert((section, family), section_family_map(seg, family, cfg));
            }
        }
    }
    names
        .iter()
        .map(|n| {
            maps.get(&(n.section, n.family))
                .and_then(|m| m.get(&n.tail()).copied())
                .unwrap_or(f64::NAN)
        })
        .collect()
}

/// Cohort feature matrix. `names` are canonical strings so appended clinical
/// columns ("clinical/<name>") can live alongside registry features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    /// `rows[i][j]` = feature j of patient i.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub patient_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Select a row subset (e.g. the training split), preserving order.
    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            patient_ids: idx.iter().map(|&i| self.patient_ids[i].clone()).collect(),
        }
    }
}

/// Extract the raw (sentinel-bearing) matrix for a cohort, rows in cohort
/// order, columns in registry order.
pub fn extract_matrix(cohort: &Cohort, cfg: &F0Config) -> Result<FeatureMatrix, FeatureError> {
    let labels = cohort.labels();
    if cohort.patients.len() < 2
        || !labels.iter().any(|&l| l == 0)
        || !labels.iter().any(|&l| l == 1)
    {
        return Err(FeatureError::SingleClassCohort);
    }
    let rows: Vec<Vec<f64>> =
        cohort.patients.par_iter().map(|p| extract_patient(p, cfg)).collect();
    Ok(FeatureMatrix {
        names: registry().iter().map(FeatureName::render).collect(),
        rows,
        labels,
        patient_ids: cohort.patients.iter().map(|p| p.patient_id.clone()).collect(),
    })
}

/// Column-median imputer. Medians are computed over the supplied row mask
/// (the training split) so test rows never leak into the statistics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Imputer {
    pub medians: Vec<f64>,
}

impl Imputer {
    /// Fit column medians over rows where `train_mask` is true (all rows if
    /// `None`), ignoring sentinels. All-sentinel columns fall back to 0.
    pub fn fit(matrix: &FeatureMatrix, train_mask: Option<&[bool]>) -> Imputer {
        let medians = (0..matrix.n_cols())
            .map(|j| {
                let mut vals: Vec<f64> = matrix
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| train_mask.map_or(true, |m| m[*i]))
                    .map(|(_, r)| r[j])
                    .filter(|v| v.is_finite())
                    .collect();
                if vals.is_empty() {
                    return 0.0;
                }
                vals.sort_by(f64::total_cmp);
                let n = vals.len();
                if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    0.5 * (vals[n / 2 - 1] + vals[n / 2])
                }
            })
            .collect();
        Imputer { medians }
    }

    /// Replace sentinels in place; never touches finite entries.
    pub fn apply(&self, matrix: &mut FeatureMatrix) {
        for row in matrix.rows.iter_mut() {
            self.apply_row(row);
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (v, &m) in row.iter_mut().zip(&self.medians) {
            if !v.is_finite() {
                *v = m;
            }
        }
    }
}

/// Extract and impute in one step. With a train mask, imputation statistics
/// come from the masked rows only.
pub fn build_matrix(
    cohort: &Cohort,
    cfg: &F0Config,
    train_mask: Option<&[bool]>,
) -> Result<(FeatureMatrix, Imputer), FeatureError> {
    let mut matrix = extract_matrix(cohort, cfg)?;
    let imputer = Imputer::fit(&matrix, train_mask);
    imputer.apply(&mut matrix);
    Ok((matrix, imputer))
}

/// Append a clinical column named `"clinical/<name>"` as the final column.
pub fn append_clinical(
    matrix: &mut FeatureMatrix,
    name: &str,
    values: &[f64],
) -> Result<(), FeatureError> {
    if values.len() != matrix.n_rows() {
        return Err(FeatureError::LengthMismatch {
            expected: matrix.n_rows(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteClinical);
    }
    matrix.names.push(format!("clinical/{name}"));
    for (row, &v) in matrix.rows.iter_mut().zip(values) {
        row.push(v);
    }
    Ok(())
}

/// Remove a named column, returning its values.
pub fn remove_column(matrix: &mut FeatureMatrix, name: &str) -> Result<Vec<f64>, FeatureError> {
    let j = matrix
        .names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| FeatureError::NoSuchColumn(name.to_string()))?;
    matrix.names.remove(j);
    Ok(matrix.rows.iter_mut().map(|r| r.remove(j)).collect())
}

/// CSV export: header `patient_id,label,<names...>`, sentinels as `NaN`,
/// numbers in shortest round-trip form. Names contain no commas.
pub fn to_csv(matrix: &FeatureMatrix) -> String {
    let mut s = String::from("patient_id,label");
    for n in &matrix.names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for i in 0..matrix.n_rows() {
        s.push_str(&matrix.patient_ids[i]);
        s.push(',');
        s.push_str(&matrix.labels[i].to_string());
        for &v in &matrix.rows[i] {
            s.push(',');
            if v.is_nan() {
                s.push_str("NaN");
            } else {
                s.push_str(&format!("{v}"));
            }
        }
        s.push('\n');
    }
    s
}

pub fn from_csv(text: &str) -> Result<FeatureMatrix, FeatureError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(FeatureError::BadCsv { line: 1, reason: "empty file".into() })?;
    let mut cols = header.split(',');
    if cols.next() != Some("patient_id") || cols.next() != Some("label") {
        return Err(FeatureError::BadCsv {
            line: 1,
            reason: "header must start with patient_id,label".into(),
        });
    }
    let names: Vec<String> = cols.map(str::to_string).collect();
    let mut matrix = FeatureMatrix {
        names,
        rows: Vec::new(),
        labels: Vec::new(),
        patient_ids: Vec::new(),
    };
    for (li, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| FeatureError::BadCsv { line: li + 1, reason: reason.into() };
        let mut f = line.split(',');
        let pid = f.next().ok_or_else(|| bad("missing patient_id"))?;
        let label: u8 = f
            .next()
            .and_then(|v| v.parse().ok())
            .filter(|&l| l <= 1)
            .ok_or_else(|| bad("label must be 0 or 1"))?;
        let row: Vec<f64> = f
            .map(|v| if v == "NaN" { Ok(f64::NAN) } else { v.parse::<f64>() })
            .collect::<Result<_, _>>()
            .map_err(|e| bad(&format!("bad number: {e}")))?;
        if row.len() != matrix.names.len() {
            return Err(bad(&format!(
                "expected {} values, got {}",
                matrix.names.len(),
                row.len()
            )));
        }
        matrix.patient_ids.push(pid.to_string());
        matrix.labels.push(label);
        matrix.rows.push(row);
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_cohort, synth_patient, ClassSpec, CohortSpec};

    #[test]
    fn registry_composition_and_routing() {
        let names = registry();
        // 2 sections x 9 x 6 glottal + 4 x 7 x 6 phonation + 3 x 26 prosody.
        assert_eq!(names.len(), 108 + 168 + 78);
        for n in &names {
            assert!(n.family.sections().contains(&n.section));
            if n.family == Family::Glottal {
                assert!(matches!(n.section, SectionId::S2VowelA | SectionId::S3VowelI));
            }
            if n.family == Family::Prosody {
                assert_ne!(n.section, SectionId::S4Conversation);
            }
        }
        let a: Vec<String> = names.iter().map(FeatureName::render).collect();
        let b: Vec<String> = registry().iter().map(FeatureName::render).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn names_roundtrip_through_parse() {
        for n in registry() {
            let rendered = n.render();
            let parsed = FeatureName::parse(&rendered).unwrap();
            assert_eq!(parsed, n, "{rendered}");
        }
        for bad in [
            "Section5.wav/phonation/avg apq",
            "Section1.wav/glottal/global avg avg HRF",
            "Section4.wav/prosody/avgtilt",
            "Section2.wav/phonation/avg bogus",
            "nonsense",
        ] {
            assert!(FeatureName::parse(bad).is_err(), "{bad}");
        }
        let n = FeatureName::parse("Section3.wav/glottal/global avg avg HRF").unwrap();
        assert_eq!(n.functional, "avg");
        assert_eq!(n.descriptor, "avg HRF");
        let p = FeatureName::parse("Section1.wav/prosody/skwtiltEvoiced").unwrap();
        assert_eq!(p.functional, "skw");
        assert_eq!(p.descriptor, "tiltEvoiced");
        let s = FeatureName::parse("Section1.wav/prosody/voicedRate").unwrap();
        assert_eq!(s.functional, "");
    }

    fn small_cohort() -> Cohort {
        let spec = CohortSpec {
            section_durations_s: [2.0, 1.0, 1.0, 2.0],
            ..CohortSpec::new(4, ClassSpec::baseline(), ClassSpec::separated(), 99)
        };
        synth_cohort(&spec).unwrap()
    }

    #[test]
    fn extraction_is_deterministic_with_full_voicing() {
        let patient = synth_patient(&ClassSpec::baseline(), 0, "p0", [2.0, 1.0, 1.0, 2.0], 5)
            .unwrap();
        let cfg = F0Config::default();
        let a = extract_patient(&patient, &cfg);
        let b = extract_patient(&patient, &cfg);
        assert_eq!(a.len(), registry().len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn silent_section4_hits_only_its_columns() {
        let mut patient =
            synth_patient(&ClassSpec::baseline(), 0, "p0", [2.0, 1.0, 1.0, 1.0], 5).unwrap();
        let silent = AudioSegment {
            samples: vec![0.0; 16000],
            sample_rate: 16000,
            section: SectionId::S4Conversation,
        };
        patient.sections.insert(SectionId::S4Conversation, silent);
        let vals = extract_patient(&patient, &F0Config::default());
        for (n, v) in registry().iter().zip(&vals) {
            if n.section == SectionId::S4Conversation {
                assert!(v.is_nan(), "{} should be a sentinel", n.render());
            }
        }
    }

    #[test]
    fn matrix_shape_and_single_class_error() {
        let cohort = small_cohort();
        let cfg = F0Config::default();
        let (m, _) = build_matrix(&cohort, &cfg, None).unwrap();
        assert_eq!(m.n_rows(), 4);
        assert_eq!(m.n_cols(), registry().len());
        assert!(m.rows.iter().flatten().all(|v| v.is_finite()));

        let mut one_class = cohort.clone();
        for p in one_class.patients.iter_mut() {
            p.label = 1;
        }
        assert!(matches!(
            extract_matrix(&one_class, &cfg),
            Err(FeatureError::SingleClassCohort)
        ));
    }

    fn toy_matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix {
            names: (0..rows[0].len()).map(|j| format!("clinical/f{j}")).collect(),
            rows,
            labels: (0..n).map(|i| (i % 2) as u8).collect(),
            patient_ids: (0..n).map(|i| format!("p{i}")).collect(),
        }
    }

    #[test]
    fn median_imputation_rules() {
        let mut m = toy_matrix(vec![
            vec![1.0, 10.0],
            vec![2.0, f64::NAN],
            vec![3.0, 30.0],
            vec![f64::NAN, 40.0],
        ]);
        let imp = Imputer::fit(&m, None);
        assert_eq!(imp.medians[0], 2.0);
        imp.apply(&mut m);
        assert_eq!(m.rows[3][0], 2.0);
        assert_eq!(m.rows[0][0], 1.0); // untouched

        // Train-only statistics: exclude rows 2 and 3.
        let m2 = toy_matrix(vec![
            vec![1.0],
            vec![3.0],
            vec![100.0],
            vec![f64::NAN],
        ]);
        let imp2 = Imputer::fit(&m2, Some(&[true, true, false, false]));
        assert_eq!(imp2.medians[0], 2.0);
    }

    #[test]
    fn clinical_append_remove_is_inverse() {
        let base = toy_matrix(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut m = base.clone();
        append_clinical(&mut m, "ntprobnp", &[5.0, 6.0]).unwrap();
        assert_eq!(m.n_cols(), 3);
        assert_eq!(m.names.last().unwrap(), "clinical/ntprobnp");
        let vals = remove_column(&mut m, "clinical/ntprobnp").unwrap();
        assert_eq!(vals, vec![5.0, 6.0]);
        assert_eq!(m, base);

        assert!(matches!(
            append_clinical(&mut m, "x", &[1.0]),
            Err(FeatureError::LengthMismatch { .. })
        ));
        assert!(matches!(
            append_clinical(&mut m, "x", &[1.0, f64::NAN]),
            Err(FeatureError::NonFiniteClinical)
        ));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut m = toy_matrix(vec![
            vec![1.0, 0.1234567890123456789, f64::NAN],
            vec![-2.5e-17, 3.0, 4.0],
        ]);
        m.names = vec![
            "Section2.wav/phonation/avg apq".into(),
            "Section3.wav/glottal/global avg avg HRF".into(),
            "clinical/ntprobnp".into(),
        ];
        let text = to_csv(&m);
        let back = from_csv(&text).unwrap();
        assert_eq!(back.names, m.names);
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.patient_ids, m.patient_ids);
        for (a, b) in m.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert!(from_csv("bogus\n").is_err());
    }
}
