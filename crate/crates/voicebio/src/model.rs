//! Regularized binary logistic regression: standardization, deterministic
//! convex fitting, acoustic-predictor and probability outputs, odds-ratio
//! interpretation, JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no feature named {0:?}")]
    UnknownFeature(String),
    #[error("model schema version {found} unsupported (expected {MODEL_SCHEMA_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyper {
    /// Inverse regularization strength multiplying the data term.
    pub c: f64,
    pub penalty: Penalty,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { c: 0.2, penalty: Penalty::L2, tol: 1e-8, max_iter: 1000 }
    }
}

/// Per-feature z-score scaler fitted on training rows (population std).
/// Zero-variance columns are frozen: they scale to 0 and their weight is
/// forced to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub frozen: Vec<bool>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Scaler, ModelError> {
        if rows.len() < 2 {
            return Err(ModelError::TooFewRows(rows.len()));
        }
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        for r in rows {
            for j in 0..d {
                stds[j] += (r[j] - means[j]).powi(2);
            }
        }
        for s in stds.iter_mut() {
            *s = (*s / n).sqrt();
        }
        let frozen = stds.iter().map(|&s| s == 0.0).collect();
        Ok(Scaler { means, stds, frozen })
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        if row.len() != self.means.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.means.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| if self.frozen[j] { 0.0 } else { (v - self.means[j]) / self.stds[j] })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub n_train: usize,
    pub seed: u64,
    pub converged: bool,
    pub final_objective: f64,
    /// Objective value after every accepted optimizer step (non-increasing).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub theta0: f64,
    pub theta: Vec<f64>,
    pub scaler: Scaler,
    pub hyper: Hyper,
    pub decision_threshold: f64,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    /// Acoustic predictor: the unitless linear score before the sigmoid.
    pub z: f64,
    pub p: f64,
    pub label_hat: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OddsRatioReport {
    pub feature: String,
    pub coef_scaled: f64,
    pub odds_ratio_scaled: f64,
    /// One scaled unit expressed in the feature's original units (= the
    /// training std), the increment the odds ratio applies per.
    pub original_unit_delta_for_or: f64,
    pub statement: String,
}

pub fn sigmoid(z: f64) -> f64 {
    // Exponent clamped at +/-500; the result is additionally pinned to the
    // largest f64 below 1 so p stays strictly inside (0, 1).
    let p = 1.0 / (1.0 + (-z.clamp(-500.0, 500.0)).exp());
    p.min(1.0 - f64::EPSILON / 2.0)
}

fn check_classes(y: &[u8]) -> Result<(), ModelError> {
    if !y.iter().any(|&l| l == 0) || !y.iter().any(|&l| l == 1) {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

/// Objective J(theta) over standardized rows:
/// L2: 0.5 ||theta||^2 + C sum_i l_i, L1: ||theta||_1 + C sum_i l_i,
/// with l_i the per-sample negative log-likelihood and the intercept
/// unpenalized.
pub fn objective(
    theta0: f64,
    theta: &[f64],
    x: &[Vec<f64>],
    y: &[u8],
    hyper: &Hyper,
) -> f64 {
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &yi)| {
            let z = theta0 + dot(theta, r);
            let p = sigmoid(z);
            -((yi as f64) * p.ln() + (1.0 - yi as f64) * (1.0 - p).ln())
        })
        .sum();
    let penalty = match hyper.penalty {
        Penalty::L2 => 0.5 * theta.iter().map(|t| t * t).sum::<f64>(),
        Penalty::L1 => theta.iter().map(|t| t.abs()).sum::<f64>(),
    };
    penalty + hyper.c * data
}

/// Exact objective and analytic gradient (including the intercept slot at
/// index 0) for the smooth L2 path.
pub fn loss_and_gradient(
    theta0: f64,
    theta: &[f64],
    x: &[Vec<f64>],
    y: &[u8],
    hyper: &Hyper,
) -> (f64, Vec<f64>) {
    let d = theta.len();
    let mut grad = vec![0.0; d + 1];
    for (r, &yi) in x.iter().zip(y) {
        let res = sigmoid(theta0 + dot(theta, r)) - yi as f64;
        grad[0] += hyper.c * res;
        for j in 0..d {
            grad[j + 1] += hyper.c * res * r[j];
        }
    }
    if hyper.penalty == Penalty::L2 {
        for j in 0..d {
            grad[j + 1] += theta[j];
        }
    }
    (objective(theta0, theta, x, y, hyper), grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the symmetric positive-definite system H s = -g by Cholesky.
fn spd_solve(mut h: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        for k in 0..j {
            let l = h[j][k];
            for i in j..n {
                h[i][j] -= h[i][k] * l;
            }
        }
        if h[j][j] <= 0.0 {
            return None;
        }
        let d = h[j][j].sqrt();
        for i in j..n {
            h[i][j] /= d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= h[i][k] * b[k];
        }
        b[i] /= h[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= h[k][i] * b[k];
        }
        b[i] /= h[i][i];
    }
    Some(b)
}

/// Damped Newton with halving line search on the L2 objective, started from
/// an arbitrary point (the objective is strictly convex, so every start
/// reaches the same optimum). Returns (theta0, theta, converged, trace).
pub fn fit_l2(
    x: &[Vec<f64>],
    y: &[u8],
    hyper: &Hyper,
    init0: f64,
    init: &[f64],
) -> (f64, Vec<f64>, bool, Vec<f64>) {
    let d = init.len();
    let mut theta0 = init0;
    let mut theta = init.to_vec();
    let mut trace = vec![objective(theta0, &theta, x, y, hyper)];
    let mut converged = false;
    for _ in 0..hyper.max_iter {
        let (j_cur, grad) = loss_and_gradient(theta0, &theta, x, y, hyper);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= hyper.tol {
            converged = true;
            break;
        }
        // Hessian of J in the (theta0, theta) block form.
        let mut h = vec![vec![0.0; d + 1]; d + 1];
        for r in x {
            let p = sigmoid(theta0 + dot(&theta, r));
            let w = hyper.c * (p * (1.0 - p)).max(1e-12);
            h[0][0] += w;
            for a in 0..d {
                h[a + 1][0] += w * r[a];
                for b in 0..=a {
                    h[a + 1][b + 1] += w * r[a] * r[b];
                }
            }
        }
        for a in 0..d {
            h[a + 1][a + 1] += 1.0; // L2 penalty curvature
        }
        for a in 0..=d {
            for b in a + 1..=d {
                h[a][b] = h[b][a];
            }
        }
        let step = match spd_solve(h, grad.iter().map(|g| -g).collect()) {
            Some(s) => s,
            None => break,
        };
        // Halving line search: accept the first strict decrease.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let t0 = theta0 + alpha * step[0];
            let t: Vec<f64> =
                theta.iter().zip(&step[1..]).map(|(v, s)| v + alpha * s).collect();
            let j_new = objective(t0, &t, x, y, hyper);
            if j_new < j_cur {
                theta0 = t0;
                theta = t;
                trace.push(j_new);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Numerically at the optimum: no descent direction remains.
            converged = gnorm <= 1e-6;
            break;
        }
    }
    (theta0, theta, converged, trace)
}

/// Outcome of the proximal coordinate-descent L1 solve.
pub(crate) struct L1Fit {
    pub theta0: f64,
    pub theta: Vec<f64>,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// Largest coordinate step of the final sweep, for convergence reports.
    pub last_step: f64,
}

/// Proximal coordinate descent on the L1 objective over column-major
/// standardized data. Shared between model fitting and RFE importance.
pub(crate) fn fit_l1_columns(
    cols: &[Vec<f64>],
    y: &[u8],
    c: f64,
    tol: f64,
    max_sweeps: usize,
) -> L1Fit {
    let n = y.len();
    let d = cols.len();
    let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let mut theta0 = 0.0;
    let mut theta = vec![0.0; d];
    let mut z = vec![0.0; n];
    let hyper = Hyper { c, penalty: Penalty::L1, ..Hyper::default() };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|col| col[i]).collect()).collect();
    let mut trace = vec![objective(theta0, &theta, &rows, y, &hyper)];
    let mut converged = false;
    let mut last_step = f64::INFINITY;
    for _ in 0..max_sweeps {
        let mut max_step = 0.0f64;
        let (mut g, mut h) = (0.0, 0.0);
        for i in 0..n {
            let p = sigmoid(z[i]);
            g += c * (p - yf[i]);
            h += c * (p * (1.0 - p)).max(1e-10);
        }
        let d0 = -g / h;
        theta0 += d0;
        for zi in z.iter_mut() {
            *zi += d0;
        }
        max_step = max_step.max(d0.abs());
        for (j, xj) in cols.iter().enumerate() {
            let (mut g, mut h) = (0.0, 0.0);
            for i in 0..n {
                let p = sigmoid(z[i]);
                g += c * xj[i] * (p - yf[i]);
                h += c * xj[i] * xj[i] * (p * (1.0 - p)).max(1e-10);
            }
            if h <= 0.0 {
                continue;
            }
            let v = theta[j] - g / h;
            let t = 1.0 / h;
            let new = if v > t {
                v - t
            } else if v < -t {
                v + t
            } else {
                0.0
            };
            let delta = new - theta[j];
            if delta != 0.0 {
                theta[j] = new;
                for i in 0..n {
                    z[i] += delta * xj[i];
                }
                max_step = max_step.max(delta.abs());
            }
        }
        trace.push(objective(theta0, &theta, &rows, y, &hyper));
        last_step = max_step;
        if max_step < tol {
            converged = true;
            break;
        }
    }
    L1Fit { theta0, theta, converged, trace, last_step }
}

/// Fit a model on raw rows: standardize, then minimize the penalized
/// objective. Non-convergence returns the model with the flag false.
pub fn fit(
    rows: &[Vec<f64>],
    labels: &[u8],
    feature_names: &[String],
    hyper: &Hyper,
    seed: u64,
) -> Result<LogisticModel, ModelError> {
    check_classes(labels)?;
    let scaler = Scaler::fit(rows)?;
    if rows[0].len() != feature_names.len() {
        return Err(ModelError::DimensionMismatch {
            expected: feature_names.len(),
            got: rows[0].len(),
        });
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect::<Result<_, _>>()?;
    let d = feature_names.len();
    let (theta0, mut theta, converged, trace) = match hyper.penalty {
        Penalty::L2 => fit_l2(&x, labels, hyper, 0.0, &vec![0.0; d]),
        Penalty::L1 => {
            let cols: Vec<Vec<f64>> =
                (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect();
            let f = fit_l1_columns(
                &cols,
                labels,
                hyper.c,
                hyper.tol.max(1e-10),
                hyper.max_iter.max(10_000),
            );
            (f.theta0, f.theta, f.converged, f.trace)
        }
    };
    for (t, &f) in theta.iter_mut().zip(&scaler.frozen) {
        if f {
            *t = 0.0;
        }
    }
    let final_objective = *trace.last().unwrap();
    Ok(LogisticModel {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_names: feature_names.to_vec(),
        theta0,
        theta,
        scaler,
        hyper: hyper.clone(),
        decision_threshold: 0.5,
        train_meta: TrainMeta {
            n_train: rows.len(),
            seed,
            converged,
            final_objective,
            objective_trace: trace,
        },
    })
}

impl LogisticModel {
    /// Acoustic predictor z for a raw (unstandardized) row.
    pub fn acoustic_predictor(&self, row: &[f64]) -> Result<f64, ModelError> {
        let s = self.scaler.apply(row)?;
        Ok(self.theta0 + dot(&self.theta, &s))
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.acoustic_predictor(row)?))
    }

    /// Inclusive at the threshold: p == threshold classifies as 1.
    pub fn classify(&self, row: &[f64]) -> Result<u8, ModelError> {
        Ok((self.predict_proba(row)? >= self.decision_threshold) as u8)
    }

    pub fn predict_record(&self, patient_id: &str, row: &[f64]) -> Result<PredictionRecord, ModelError> {
        let z = self.acoustic_predictor(row)?;
        let p = sigmoid(z);
        Ok(PredictionRecord {
            patient_id: patient_id.to_string(),
            z,
            p,
            label_hat: (p >= self.decision_threshold) as u8,
        })
    }

    /// Predict with features supplied in a different order, aligned by name.
    pub fn predict_proba_named(&self, names: &[String], row: &[f64]) -> Result<f64, ModelError> {
        if names.len() != row.len() {
            return Err(ModelError::DimensionMismatch { expected: names.len(), got: row.len() });
        }
        let aligned: Vec<f64> = self
            .feature_names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .map(|j| row[j])
                    .ok_or_else(|| ModelError::UnknownFeature(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        self.predict_proba(&aligned)
    }

    pub fn odds_ratio_report(&self, feature: &str) -> Result<OddsRatioReport, ModelError> {
        let j = self
            .feature_names
            .iter()
            .position(|n| n == feature)
            .ok_or_else(|| ModelError::UnknownFeature(feature.to_string()))?;
        let coef = self.theta[j];
        let or = coef.exp();
        let delta = self.scaler.stds[j];
        Ok(OddsRatioReport {
            feature: feature.to_string(),
            coef_scaled: coef,
            odds_ratio_scaled: or,
            original_unit_delta_for_or: delta,
            statement: format!("per {delta}-unit increase in {feature}, odds x{or:.3}"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LogisticModel, ModelError> {
        let text = std::fs::read_to_string(path)?;
        // Check the version first so a newer-schema file reports clearly.
        let probe: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        let found = probe
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelError::CorruptModel("missing schema_version".into()))?
            as u32;
        if found != MODEL_SCHEMA_VERSION {
            return Err(ModelError::VersionMismatch { found });
        }
        let model: LogisticModel =
            serde_json::from_str(&text).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        if model.theta.len() != model.feature_names.len()
            || model.theta.len() != model.scaler.means.len()
        {
            return Err(ModelError::CorruptModel("inconsistent dimensions".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("clinical/f{j}")).collect()
    }

    fn separable_1d(n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if i < n / 2 { -1.0 } else { 1.0 } + 0.01 * i as f64])
            .collect();
        let labels: Vec<u8> = (0..n).map(|i| (i >= n / 2) as u8).collect();
        (rows, labels)
    }

    #[test]
    fn scaler_basics() {
        let s = Scaler::fit(&[vec![0.0], vec![10.0]]).unwrap();
        assert_eq!(s.means[0], 5.0);
        assert_eq!(s.stds[0], 5.0);
        assert_eq!(s.apply(&[10.0]).unwrap()[0], 1.0);

        let c = Scaler::fit(&[vec![3.0], vec![3.0], vec![3.0]]).unwrap();
        assert!(c.frozen[0]);
        assert_eq!(c.apply(&[7.0]).unwrap()[0], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..3).map(|_| rng.gen::<f64>() * 10.0).collect()).collect();
        let sc = Scaler::fit(&rows).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = rows.iter().map(|r| sc.apply(r).unwrap()[j]).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() <= 1e-12);
            assert!((var.sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn separable_fit_is_finite_and_perfect() {
        let (rows, labels) = separable_1d(20);
        let m = fit(&rows, &labels, &names(1), &Hyper::default(), 0).unwrap();
        assert!(m.train_meta.converged);
        let norm = m.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(norm < 50.0, "norm = {norm}");
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| m.classify(r).unwrap() == l)
            .count();
        assert_eq!(correct, 20);
    }

    #[test]
    fn null_data_gives_small_weights() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> =
                (0..100).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
            let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
            let m = fit(&rows, &labels, &names(3), &Hyper::default(), seed).unwrap();
            let acc = rows
                .iter()
                .zip(&labels)
                .filter(|(r, &l)| m.classify(r).unwrap() == l)
                .count() as f64
                / 100.0;
            assert!(acc <= 0.70, "seed {seed}: acc {acc}");
            assert!(m.theta.iter().all(|t| t.abs() <= 0.5), "seed {seed}: {:?}", m.theta);
        }
    }

    #[test]
    fn sign_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|i| vec![i as f64 / 10.0 + rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let labels: Vec<u8> = (0..30).map(|i| (i >= 15) as u8).collect();
        let a = fit(&rows, &labels, &names(2), &Hyper::default(), 0).unwrap();

        // Label flip: the objective is symmetric, so theta and theta0 negate.
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let b = fit(&rows, &flipped, &names(2), &Hyper::default(), 0).unwrap();
        assert!((a.theta0 + b.theta0).abs() <= 1e-8);
        for (ta, tb) in a.theta.iter().zip(&b.theta) {
            assert!((ta + tb).abs() <= 1e-8, "{ta} vs {tb}");
        }

        // Negating rows as well cancels in the internal standardization, so
        // the fitted probabilities mirror exactly: p'(-x) = 1 - p(x).
        let neg_rows: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let c = fit(&neg_rows, &flipped, &names(2), &Hyper::default(), 0).unwrap();
        for r in &rows {
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let p = a.predict_proba(r).unwrap();
            let q = c.predict_proba(&neg).unwrap();
            assert!((p + q - 1.0).abs() <= 1e-8, "{p} vs {q}");
        }
    }

    #[test]
    fn predictor_and_probability_definitions() {
        let (rows, labels) = separable_1d(10);
        let mut m = fit(&rows, &labels, &names(1), &Hyper::default(), 0).unwrap();
        m.theta = vec![0.0];
        m.theta0 = 0.0;
        assert_eq!(m.acoustic_predictor(&[123.4]).unwrap(), 0.0);
        assert_eq!(m.predict_proba(&[123.4]).unwrap(), 0.5);
        assert_eq!(m.classify(&[123.4]).unwrap(), 1); // inclusive boundary

        m.theta = vec![1.0];
        m.scaler = Scaler { means: vec![0.0], stds: vec![1.0], frozen: vec![false] };
        assert_eq!(m.acoustic_predictor(&[2.5]).unwrap(), 2.5);

        assert!(sigmoid(20.0) > 0.999999);
        assert!(sigmoid(1e9) < 1.0 && sigmoid(-1e9) > 0.0);
        for z in [-3.0, 0.2, 7.0] {
            m.theta0 = z;
            m.theta = vec![0.0];
            let via_pred = sigmoid(m.acoustic_predictor(&[1.0]).unwrap());
            assert!((m.predict_proba(&[1.0]).unwrap() - via_pred).abs() <= 1e-15);
        }
        assert!(matches!(
            m.predict_proba(&[1.0, 2.0]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn objective_values_and_gradient_check() {
        let hyper = Hyper::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // theta = 0, balanced labels: data term = C * m * ln 2.
        let x: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y: Vec<u8> = (0..8).map(|i| (i % 2) as u8).collect();
        let j0 = objective(0.0, &[0.0, 0.0], &x, &y, &hyper);
        assert!((j0 - hyper.c * 8.0 * std::f64::consts::LN_2).abs() <= 1e-12);

        // Doubling C doubles the data term, penalty unchanged.
        let theta = [0.3, -0.7];
        let penalty = 0.5 * theta.iter().map(|t| t * t).sum::<f64>();
        let j1 = objective(0.1, &theta, &x, &y, &hyper);
        let double = Hyper { c: 2.0 * hyper.c, ..hyper.clone() };
        let j2 = objective(0.1, &theta, &x, &y, &double);
        assert!((j2 - penalty - 2.0 * (j1 - penalty)).abs() <= 1e-10);

        // Central finite differences over 20 random instances.
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> =
                (0..12).map(|_| (0..3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect()).collect();
            let y: Vec<u8> = (0..12).map(|_| rng.gen_range(0..2) as u8).collect();
            let theta0 = rng.gen::<f64>() - 0.5;
            let theta: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (_, grad) = loss_and_gradient(theta0, &theta, &x, &y, &hyper);
            let h = 1e-5;
            let fd = |k: usize| {
                let mut t0p = theta0;
                let mut t0m = theta0;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                if k == 0 {
                    t0p += h;
                    t0m -= h;
                } else {
                    tp[k - 1] += h;
                    tm[k - 1] -= h;
                }
                (objective(t0p, &tp, &x, &y, &hyper) - objective(t0m, &tm, &x, &y, &hyper))
                    / (2.0 * h)
            };
            for k in 0..4 {
                let num = fd(k);
                let rel = (grad[k] - num).abs() / grad[k].abs().max(1.0);
                assert!(rel <= 1e-5, "seed {seed} coord {k}: {} vs {num}", grad[k]);
            }
        }
    }

    #[test]
    fn objective_trace_monotone_and_optimum_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i >= 15) as u8 as f64 + rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let labels: Vec<u8> = (0..30).map(|i| (i >= 15) as u8).collect();
        let m = fit(&rows, &labels, &names(2), &Hyper::default(), 0).unwrap();
        for w in m.train_meta.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "trace not monotone: {w:?}");
        }

        // Convex uniqueness: restart from a far-away point.
        let scaler = Scaler::fit(&rows).unwrap();
        let x: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r).unwrap()).collect();
        let (a0, a, _, _) = fit_l2(&x, &labels, &Hyper::default(), 0.0, &[0.0, 0.0]);
        let (b0, b, _, _) = fit_l2(&x, &labels, &Hyper::default(), 5.0, &[-4.0, 3.0]);
        assert!((a0 - b0).abs() <= 1e-6);
        for (ta, tb) in a.iter().zip(&b) {
            assert!((ta - tb).abs() <= 1e-6);
        }
    }

    #[test]
    fn odds_ratio_arithmetic() {
        let (rows, labels) = separable_1d(10);
        let mut m = fit(&rows, &labels, &names(1), &Hyper::default(), 0).unwrap();
        m.theta = vec![0.39];
        m.scaler.stds = vec![9800.0];
        let r = m.odds_ratio_report("clinical/f0").unwrap();
        assert!((r.odds_ratio_scaled - 1.4770).abs() <= 1e-3);
        assert_eq!(r.original_unit_delta_for_or, 9800.0);
        assert!(r.statement.contains("9800"));
        assert!(r.statement.contains("1.477"));

        m.theta = vec![0.0];
        assert_eq!(m.odds_ratio_report("clinical/f0").unwrap().odds_ratio_scaled, 1.0);
        assert!(matches!(
            m.odds_ratio_report("nope"),
            Err(ModelError::UnknownFeature(_))
        ));
    }

    #[test]
    fn persistence_roundtrip_and_errors() {
        let (rows, labels) = separable_1d(16);
        let m = fit(&rows, &labels, &names(1), &Hyper::default(), 7).unwrap();
        let dir = std::env::temp_dir().join("voicebio-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        m.save(&path).unwrap();
        let back = LogisticModel::load(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let row = vec![rng.gen::<f64>() * 4.0 - 2.0];
            let a = m.predict_proba(&row).unwrap();
            let b = back.predict_proba(&row).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let text = std::fs::read_to_string(&path).unwrap();
        let trunc = dir.join("trunc.json");
        std::fs::write(&trunc, &text[..text.len() / 2]).unwrap();
        assert!(matches!(LogisticModel::load(&trunc), Err(ModelError::CorruptModel(_))));

        let future = dir.join("future.json");
        std::fs::write(&future, text.replace("\"schema_version\": 1", "\"schema_version\": 99"))
            .unwrap();
        assert!(matches!(
            LogisticModel::load(&future),
            Err(ModelError::VersionMismatch { found: 99 })
        ));
    }

    #[test]
    fn named_prediction_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i >= 10) as u8 as f64 + rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| (i >= 10) as u8).collect();
        let m = fit(&rows, &labels, &names(2), &Hyper::default(), 0).unwrap();
        let row = [0.7, 0.3];
        let direct = m.predict_proba(&row).unwrap();
        let swapped_names = vec!["clinical/f1".to_string(), "clinical/f0".to_string()];
        let via_names = m.predict_proba_named(&swapped_names, &[0.3, 0.7]).unwrap();
        assert_eq!(direct.to_bits(), via_names.to_bits());
    }

    #[test]
    fn l1_fit_shrinks_noise_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![((i >= 20) as u8 as f64) * 2.0 + 0.1 * rng.gen::<f64>(), rng.gen::<f64>()]
            })
            .collect();
        let labels: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let hyper = Hyper { penalty: Penalty::L1, c: 0.1, ..Hyper::default() };
        let m = fit(&rows, &labels, &names(2), &hyper, 0).unwrap();
        assert!(m.theta[0].abs() > 0.0);
        assert_eq!(m.theta[1], 0.0, "noise weight {:?}", m.theta);
        for w in m.train_meta.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
