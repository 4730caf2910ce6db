//! End-to-end fit: imputation statistics, two-stage feature selection, and
//! model training, all from training rows only. Clinical columns (names
//! under "clinical/") bypass selection and always enter the model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::features::{FeatureMatrix, Imputer};
use crate::model::{self, LogisticModel, ModelError};
use crate::selection::{run_selection, SelectionError, SelectionReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training matrix has no rows")]
    EmptyMatrix,
}

/// Everything needed to score a raw feature row drawn with the same column
/// layout as the training matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPipeline {
    /// Column names of the training matrix, in order; prediction rows must
    /// use this layout.
    pub input_names: Vec<String>,
    pub imputer: Imputer,
    pub selection: SelectionReport,
    pub model: LogisticModel,
    pub config: PipelineConfig,
}

/// Fit the full pipeline on a (possibly sentinel-bearing) training matrix.
/// Selection sees only non-clinical columns; every "clinical/" column is
/// appended to the selected set unconditionally.
pub fn fit_pipeline(
    train: &FeatureMatrix,
    cfg: &PipelineConfig,
) -> Result<FittedPipeline, PipelineError> {
    if train.n_rows() == 0 {
        return Err(PipelineError::EmptyMatrix);
    }
    let imputer = Imputer::fit(train, None);
    let mut imputed = train.clone();
    imputer.apply(&mut imputed);

    let clinical_idx: Vec<usize> = (0..imputed.n_cols())
        .filter(|&j| imputed.names[j].starts_with("clinical/"))
        .collect();
    let voice = {
        let mut m = imputed.clone();
        for j in clinical_idx.iter().rev() {
            m.names.remove(*j);
            for r in m.rows.iter_mut() {
                r.remove(*j);
            }
        }
        m
    };
    let selection = run_selection(&voice, &cfg.selection)?;

    let mut model_names = selection.selected.clone();
    model_names.extend(clinical_idx.iter().map(|&j| imputed.names[j].clone()));
    let cols: Vec<usize> = model_names
        .iter()
        .map(|n| imputed.names.iter().position(|m| m == n).expect("selected name in matrix"))
        .collect();
    let rows: Vec<Vec<f64>> = imputed
        .rows
        .iter()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect();
    let model = model::fit(&rows, &imputed.labels, &model_names, &cfg.hyper, cfg.seed)?;

    Ok(FittedPipeline {
        input_names: train.names.clone(),
        imputer,
        selection,
        model,
        config: cfg.clone(),
    })
}

impl FittedPipeline {
    /// Score one raw row in training-matrix column order: impute sentinels
    /// with the stored medians, then restrict to the model's features.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ModelError> {
        Ok(model::sigmoid(self.acoustic_predictor(row)?))
    }

    pub fn acoustic_predictor(&self, row: &[f64]) -> Result<f64, ModelError> {
        if row.len() != self.input_names.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_names.len(),
                got: row.len(),
            });
        }
        let mut filled = row.to_vec();
        self.imputer.apply_row(&mut filled);
        let restricted: Vec<f64> = self
            .model
            .feature_names
            .iter()
            .map(|n| {
                let j = self
                    .input_names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| ModelError::UnknownFeature(n.clone()))?;
                Ok(filled[j])
            })
            .collect::<Result<_, ModelError>>()?;
        self.model.acoustic_predictor(&restricted)
    }

    pub fn classify(&self, row: &[f64]) -> Result<u8, ModelError> {
        Ok((self.predict_proba(row)? >= self.model.decision_threshold) as u8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small planted matrix: first `n_signal` columns separate the classes.
    fn planted(n: usize, n_signal: usize, n_noise: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|i| (i >= n / 2) as u8).collect();
        let rows = labels
            .iter()
            .map(|&l| {
                (0..n_signal + n_noise)
                    .map(|j| {
                        let shift = if j < n_signal && l == 1 { 2.5 } else { 0.0 };
                        shift + rng.gen::<f64>()
                    })
                    .collect()
            })
            .collect();
        FeatureMatrix {
            names: (0..n_signal + n_noise).map(|j| format!("v/f{j:03}")).collect(),
            rows,
            labels: labels.clone(),
            patient_ids: (0..n).map(|i| format!("p{i}")).collect(),
        }
    }

    #[test]
    fn fit_predict_roundtrip_on_planted_matrix() {
        let m = planted(30, 8, 40, 1);
        let cfg = PipelineConfig::default().with_seed(1);
        let fitted = fit_pipeline(&m, &cfg).unwrap();
        assert_eq!(fitted.selection.selected.len(), cfg.selection.target_k);
        let correct = m
            .rows
            .iter()
            .zip(&m.labels)
            .filter(|(r, &l)| fitted.classify(r).unwrap() == l)
            .count();
        assert!(correct >= 28, "train accuracy {correct}/30");
    }

    #[test]
    fn clinical_columns_bypass_selection() {
        let mut m = planted(30, 8, 40, 2);
        crate::features::append_clinical(&mut m, "ntprobnp", &vec![0.0; 30]).unwrap();
        let cfg = PipelineConfig::default().with_seed(2);
        let fitted = fit_pipeline(&m, &cfg).unwrap();
        assert!(fitted.model.feature_names.contains(&"clinical/ntprobnp".to_string()));
        assert!(!fitted.selection.stage1_survivors.contains(&"clinical/ntprobnp".to_string()));
        assert_eq!(fitted.model.feature_names.len(), cfg.selection.target_k + 1);
    }

    #[test]
    fn sentinels_in_prediction_rows_use_training_medians() {
        let m = planted(30, 8, 40, 3);
        let cfg = PipelineConfig::default().with_seed(3);
        let fitted = fit_pipeline(&m, &cfg).unwrap();
        // Blank out a selected feature in a probe row; the prediction must
        // equal the one computed with the training median filled in.
        let sel = &fitted.model.feature_names[0];
        let j = m.names.iter().position(|n| n == sel).unwrap();
        let mut probe = m.rows[0].clone();
        probe[j] = f64::NAN;
        let with_nan = fitted.predict_proba(&probe).unwrap();
        probe[j] = fitted.imputer.medians[j];
        let with_median = fitted.predict_proba(&probe).unwrap();
        assert_eq!(with_nan.to_bits(), with_median.to_bits());
    }

    #[test]
    fn fit_is_deterministic() {
        let m = planted(30, 8, 40, 4);
        let cfg = PipelineConfig::default().with_seed(4);
        let a = serde_json::to_vec(&fit_pipeline(&m, &cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&fit_pipeline(&m, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
