//! Train/test split, metrics, nested grid search, leave-one-out cross
//! validation, and two-group cohort statistics (Welch t-test, chi-square).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::features::FeatureMatrix;
use crate::model::{Penalty, PredictionRecord};
use crate::pipeline::{fit_pipeline, FittedPipeline, PipelineError};
use crate::selection::run_selection;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test ratio must be in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("unstratified split left a single-class side")]
    DegenerateSplit,
    #[error("cannot form {folds} inner folds from {n} rows")]
    InfeasibleFolds { folds: usize, n: usize },
    #[error("group too small or empty margin")]
    DegenerateGroups,
    #[error("fold {fold} failed: {source}")]
    FoldFailed { fold: usize, source: PipelineError },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: u8, pred: u8) {
        match (truth, pred) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, 0) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Set when precision or recall had a zero denominator (defined as 0).
    pub zero_denominator: bool,
}

impl Metrics {
    pub fn from_predictions(truth: &[u8], pred: &[u8]) -> Metrics {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(pred) {
            c.add(t, p);
        }
        Metrics::from_confusion(c)
    }

    pub fn from_confusion(c: Confusion) -> Metrics {
        let mut flag = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                flag = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            precision,
            recall,
            f1,
            confusion: c,
            zero_denominator: flag,
        }
    }
}

/// Stratified (by default) train/test split. Test size = ceil(n * ratio),
/// apportioned per class by largest remainder; membership within a class is
/// a seeded shuffle.
pub fn train_test_split(
    labels: &[u8],
    test_ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(EvalError::BadRatio(test_ratio));
    }
    if !labels.iter().any(|&l| l == 0) || !labels.iter().any(|&l| l == 1) {
        return Err(EvalError::SingleClass);
    }
    let n = labels.len();
    let n_test = (test_ratio * n as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    if stratified {
        let classes: Vec<Vec<usize>> = [0u8, 1u8]
            .iter()
            .map(|&c| (0..n).filter(|&i| labels[i] == c).collect())
            .collect();
        // Largest-remainder apportionment of the test quota across classes.
        let exact: Vec<f64> =
            classes.iter().map(|c| c.len() as f64 * n_test as f64 / n as f64).collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = n_test - quota.iter().sum::<usize>();
        let mut by_rem: Vec<usize> = (0..classes.len()).collect();
        by_rem.sort_by(|&a, &b| {
            (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor()))
        });
        for &c in &by_rem {
            if left == 0 {
                break;
            }
            if quota[c] < classes[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        for (c, idx) in classes.iter().enumerate() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            test.extend(idx.into_iter().take(quota[c]));
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        test = idx.into_iter().take(n_test).collect();
        let side_ok = |side: &dyn Fn(usize) -> bool| {
            let ls: Vec<u8> = (0..n).filter(|&i| side(i)).map(|i| labels[i]).collect();
            ls.iter().any(|&l| l == 0) && ls.iter().any(|&l| l == 1)
        };
        let in_test = |i: usize| test.contains(&i);
        if !side_ok(&in_test) || !side_ok(&|i| !in_test(i)) {
            return Err(EvalError::DegenerateSplit);
        }
    }
    test.sort_unstable();
    let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
    Ok((train, test))
}

/// Evaluate a fitted pipeline on raw rows (training-matrix layout).
pub fn evaluate(
    fitted: &FittedPipeline,
    rows: &[Vec<f64>],
    labels: &[u8],
) -> Result<Metrics, PipelineError> {
    let pred: Vec<u8> = rows
        .iter()
        .map(|r| fitted.classify(r))
        .collect::<Result<_, _>>()
        .map_err(PipelineError::Model)?;
    Ok(Metrics::from_predictions(labels, &pred))
}

/// One hyperparameter grid point: model penalty settings plus the selection
/// knobs that the search tunes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub penalty: Penalty,
    pub mi_threshold: f64,
    pub lasso_strength: f64,
}

impl GridPoint {
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.hyper.c = self.c;
        cfg.hyper.penalty = self.penalty;
        cfg.selection.mi_threshold = self.mi_threshold;
        cfg.selection.lasso_strength = self.lasso_strength;
        cfg
    }
}

pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for &c in &[0.05, 0.1, 0.2, 0.5, 1.0] {
        for &penalty in &[Penalty::L2, Penalty::L1] {
            for &mi_threshold in &[0.05, 0.105, 0.15] {
                for &lasso_strength in &[0.8, 1.2, 1.6] {
                    grid.push(GridPoint { c, penalty, mi_threshold, lasso_strength });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub point: GridPoint,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_score: f64,
    pub table: Vec<GridRow>,
}

/// Stratified k-fold index sets: per class, seeded shuffle then round-robin.
fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::new(); k];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    folds
}

/// Exhaustive nested search: every grid point runs the entire pipeline on
/// stratified inner folds of the supplied training matrix. Ties resolve by
/// lower C, then L2 before L1, then lower MI threshold, then grid order.
pub fn grid_search(
    train: &FeatureMatrix,
    base: &PipelineConfig,
    grid: &[GridPoint],
    inner_folds: usize,
    seed: u64,
) -> Result<GridSearchResult, EvalError> {
    if grid.is_empty() || inner_folds < 2 {
        return Err(EvalError::InfeasibleFolds { folds: inner_folds, n: train.n_rows() });
    }
    let min_class = [0u8, 1u8]
        .iter()
        .map(|&c| train.labels.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap();
    if min_class < inner_folds {
        return Err(EvalError::InfeasibleFolds { folds: inner_folds, n: train.n_rows() });
    }
    let folds = stratified_folds(&train.labels, inner_folds, seed);

    let table: Vec<GridRow> = grid
        .par_iter()
        .map(|point| {
            let cfg = point.apply(base);
            let mut fold_scores = Vec::with_capacity(inner_folds);
            for val in &folds {
                let tr: Vec<usize> =
                    (0..train.n_rows()).filter(|i| !val.contains(i)).collect();
                let sub = train.subset(&tr);
                let score = match fit_pipeline(&sub, &cfg) {
                    Ok(f) => {
                        let rows: Vec<Vec<f64>> =
                            val.iter().map(|&i| train.rows[i].clone()).collect();
                        let labels: Vec<u8> = val.iter().map(|&i| train.labels[i]).collect();
                        evaluate(&f, &rows, &labels).map(|m| m.accuracy).unwrap_or(0.0)
                    }
                    // A fold where this point cannot fit scores zero rather
                    // than aborting the whole search.
                    Err(_) => 0.0,
                };
                fold_scores.push(score);
            }
            let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            GridRow { point: *point, fold_scores, mean_score }
        })
        .collect();

    let penalty_rank = |p: Penalty| if p == Penalty::L2 { 0 } else { 1 };
    let mut best = 0usize;
    for i in 1..table.len() {
        let (a, b) = (&table[i], &table[best]);
        let key = |r: &GridRow, order: usize| {
            (
                -r.mean_score,
                r.point.c,
                penalty_rank(r.point.penalty),
                r.point.mi_threshold,
                order,
            )
        };
        let (ka, kb) = (key(a, i), key(b, best));
        if ka.0 < kb.0
            || (ka.0 == kb.0
                && (ka.1, ka.2, ka.3, ka.4) < (kb.1, kb.2, kb.3, kb.4))
        {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: table[best].point,
        best_score: table[best].mean_score,
        table,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<FoldResult>,
    pub mean_train: Metrics,
    pub mean_test: Metrics,
    pub pooled_confusion: Confusion,
    /// True when selection was fitted once on the full matrix (leaky
    /// comparison variant) instead of per fold.
    pub leaky_selection: bool,
}

fn mean_metrics(folds: &[FoldResult], test: bool) -> Metrics {
    let n = folds.len() as f64;
    let get = |f: &FoldResult| if test { f.test_metrics } else { f.train_metrics };
    let mut pooled = Confusion::default();
    for f in folds {
        let c = get(f).confusion;
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.tn += c.tn;
        pooled.fn_ += c.fn_;
    }
    Metrics {
        accuracy: folds.iter().map(|f| get(f).accuracy).sum::<f64>() / n,
        precision: folds.iter().map(|f| get(f).precision).sum::<f64>() / n,
        recall: folds.iter().map(|f| get(f).recall).sum::<f64>() / n,
        f1: folds.iter().map(|f| get(f).f1).sum::<f64>() / n,
        confusion: pooled,
        zero_denominator: folds.iter().any(|f| get(f).zero_denominator),
    }
}

/// Leave-one-out cross-validation. Each fold refits the FULL pipeline
/// (imputation, selection, standardization, model) on the n-1 training rows
/// only. `leaky_selection` reuses one whole-matrix selection across folds —
/// for leakage comparisons, never for reported results.
pub fn loocv(
    matrix: &FeatureMatrix,
    base: &PipelineConfig,
    leaky_selection: bool,
) -> Result<CvSummary, EvalError> {
    let n = matrix.n_rows();
    if n < 3 {
        return Err(EvalError::TooFewRows { needed: 3, got: n });
    }
    if !matrix.labels.iter().any(|&l| l == 0) || !matrix.labels.iter().any(|&l| l == 1) {
        return Err(EvalError::SingleClass);
    }
    // Leaky variant: freeze selection on ALL rows, then per fold keep only
    // the chosen columns so the fold refits scaler and model alone.
    let leaky_names: Option<Vec<String>> = if leaky_selection {
        let mut imputed = matrix.clone();
        crate::features::Imputer::fit(matrix, None).apply(&mut imputed);
        let report = run_selection(&imputed, &base.selection)
            .map_err(|e| EvalError::FoldFailed { fold: 0, source: e.into() })?;
        Some(report.selected)
    } else {
        None
    };

    let folds: Vec<Result<FoldResult, EvalError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let tr: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let sub = matrix.subset(&tr);
            let mut cfg = base.clone();
            if let Some(names) = &leaky_names {
                // Selection already done: demand survival of exactly these.
                cfg.selection.mi_threshold = f64::NEG_INFINITY;
                let keep: Vec<usize> = names
                    .iter()
                    .map(|n| matrix.names.iter().position(|m| m == n).unwrap())
                    .collect();
                let mut narrowed = sub.clone();
                narrowed.names = keep.iter().map(|&j| matrix.names[j].clone()).collect();
                narrowed.rows = sub
                    .rows
                    .iter()
                    .map(|r| keep.iter().map(|&j| r[j]).collect())
                    .collect();
                cfg.selection.target_k = names.len();
                let fitted = fit_pipeline(&narrowed, &cfg)
                    .map_err(|e| EvalError::FoldFailed { fold: i, source: e })?;
                let row: Vec<f64> = keep.iter().map(|&j| matrix.rows[i][j]).collect();
                return fold_result(i, &fitted, &narrowed, &row, matrix);
            }
            let fitted = fit_pipeline(&sub, &cfg)
                .map_err(|e| EvalError::FoldFailed { fold: i, source: e })?;
            fold_result(i, &fitted, &sub, &matrix.rows[i], matrix)
        })
        .collect();
    let folds: Vec<FoldResult> = folds.into_iter().collect::<Result<_, _>>()?;

    let mut pooled = Confusion::default();
    for f in &folds {
        let c = f.test_metrics.confusion;
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.tn += c.tn;
        pooled.fn_ += c.fn_;
    }
    Ok(CvSummary {
        mean_train: mean_metrics(&folds, false),
        mean_test: mean_metrics(&folds, true),
        pooled_confusion: pooled,
        leaky_selection,
        folds,
    })
}

fn fold_result(
    i: usize,
    fitted: &FittedPipeline,
    train: &FeatureMatrix,
    test_row: &[f64],
    full: &FeatureMatrix,
) -> Result<FoldResult, EvalError> {
    let wrap = |e: PipelineError| EvalError::FoldFailed { fold: i, source: e };
    let train_metrics = evaluate(fitted, &train.rows, &train.labels).map_err(wrap)?;
    let z = fitted.acoustic_predictor(test_row).map_err(|e| wrap(PipelineError::Model(e)))?;
    let p = crate::model::sigmoid(z);
    let label_hat = (p >= fitted.model.decision_threshold) as u8;
    let prediction = PredictionRecord {
        patient_id: full.patient_ids[i].clone(),
        z,
        p,
        label_hat,
    };
    let test_metrics = Metrics::from_predictions(&[full.labels[i]], &[label_hat]);
    Ok(FoldResult { fold: i, train_metrics, test_metrics, predictions: vec![prediction] })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    pub p_two_sided: f64,
}

/// Welch (unequal-variance) two-sample t-test with Welch-Satterthwaite dof.
/// Identical groups yield t = 0, p = 1 by convention.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::DegenerateGroups);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let t = if ma == mb { 0.0 } else { f64::INFINITY * (ma - mb).signum() };
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok(TTest { t, dof: na + nb - 2.0, p_two_sided: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|_| EvalError::DegenerateGroups)?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest { t, dof, p_two_sided: p.clamp(0.0, 1.0) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub p: f64,
}

/// Pearson chi-square on a 2x2 table, 1 dof, no continuity correction.
pub fn chi_square(table: [[f64; 2]; 2]) -> Result<ChiSquare, EvalError> {
    let [[a, b], [c, d]] = table;
    if a < 0.0 || b < 0.0 || c < 0.0 || d < 0.0 {
        return Err(EvalError::DegenerateGroups);
    }
    let n = a + b + c + d;
    let margins = [a + b, c + d, a + c, b + d];
    if margins.iter().any(|&m| m <= 0.0) {
        return Err(EvalError::DegenerateGroups);
    }
    let chi2 = n * (a * d - b * c).powi(2) / margins.iter().product::<f64>();
    let dist = ChiSquared::new(1.0).unwrap();
    Ok(ChiSquare { chi2, p: (1.0 - dist.cdf(chi2)).clamp(0.0, 1.0) })
}

/// A variable summarized per class in the cohort table.
#[derive(Debug, Clone)]
pub enum GroupVariable {
    Continuous(Vec<f64>),
    Categorical(Vec<u8>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub variable: String,
    pub group0: String,
    pub group1: String,
    pub p: f64,
}

/// Two-group summary: continuous variables as "mean ± sd" with a t-test p,
/// categorical as "count (percent%)" of value 1 with a chi-square p.
pub fn cohort_table(
    labels: &[u8],
    variables: &[(String, GroupVariable)],
) -> Result<Vec<TableRow>, EvalError> {
    let split = |f: &dyn Fn(usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        let mut g = (Vec::new(), Vec::new());
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                g.0.push(f(i));
            } else {
                g.1.push(f(i));
            }
        }
        g
    };
    if labels.iter().all(|&l| l == 0) || labels.iter().all(|&l| l == 1) {
        return Err(EvalError::DegenerateGroups);
    }
    variables
        .iter()
        .map(|(name, var)| match var {
            GroupVariable::Continuous(v) => {
                let (g0, g1) = split(&|i| v[i]);
                let fmt = |g: &[f64]| {
                    let m = g.iter().sum::<f64>() / g.len() as f64;
                    let sd = (g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                        / (g.len() - 1).max(1) as f64)
                        .sqrt();
                    format!("{m:.2} \u{b1} {sd:.2}")
                };
                let tt = t_test(&g0, &g1)?;
                Ok(TableRow {
                    variable: name.clone(),
                    group0: fmt(&g0),
                    group1: fmt(&g1),
                    p: tt.p_two_sided,
                })
            }
            GroupVariable::Categorical(v) => {
                let (g0, g1) = split(&|i| v[i] as f64);
                let count = |g: &[f64]| g.iter().filter(|&&x| x == 1.0).count() as f64;
                let (c0, c1) = (count(&g0), count(&g1));
                let cs = chi_square([
                    [c0, g0.len() as f64 - c0],
                    [c1, g1.len() as f64 - c1],
                ])?;
                let fmt = |c: f64, n: usize| format!("{c} ({:.0}%)", 100.0 * c / n as f64);
                Ok(TableRow {
                    variable: name.clone(),
                    group0: fmt(c0, g0.len()),
                    group1: fmt(c1, g1.len()),
                    p: cs.p,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn planted_matrix(n: usize, n_signal: usize, n_noise: usize, seed: u64) -> FeatureMatrix {
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
    fn split_shapes() {
        let labels: Vec<u8> = (0..29).map(|i| (i >= 15) as u8).collect();
        let (train, test) = train_test_split(&labels, 0.35, 1, true).unwrap();
        assert_eq!(train.len(), 18);
        assert_eq!(test.len(), 11);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..29).collect::<Vec<_>>());

        let balanced: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let (tr, te) = train_test_split(&balanced, 0.5, 2, true).unwrap();
        assert_eq!(te.len(), 5);
        assert_eq!(tr.len(), 5);
        for side in [&tr, &te] {
            let ones = side.iter().filter(|&&i| balanced[i] == 1).count();
            assert!((2..=3).contains(&ones));
        }

        let (a1, b1) = train_test_split(&labels, 0.35, 9, true).unwrap();
        let (a2, b2) = train_test_split(&labels, 0.35, 9, true).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);

        assert!(matches!(train_test_split(&labels, 0.0, 0, true), Err(EvalError::BadRatio(_))));
        assert!(matches!(
            train_test_split(&[1, 1, 1], 0.3, 0, true),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn metric_arithmetic() {
        let m = Metrics::from_predictions(&[1, 0, 1], &[1, 0, 1]);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

        let m = Metrics::from_predictions(&[1, 1, 0], &[0, 0, 0]);
        assert!(m.zero_denominator);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);

        let m = Metrics::from_confusion(Confusion { tp: 4, fp: 1, tn: 5, fn_: 1 });
        assert!((m.precision - 0.8).abs() < 1e-15);
        assert!((m.recall - 0.8).abs() < 1e-15);
        assert!((m.f1 - 0.8).abs() < 1e-15);
        assert!((m.accuracy - 9.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn grid_search_single_point_and_planted() {
        let m = planted_matrix(30, 8, 30, 5);
        let base = PipelineConfig::default().with_seed(5);
        let one = vec![GridPoint {
            c: 0.2,
            penalty: Penalty::L2,
            mi_threshold: 0.105,
            lasso_strength: 1.2,
        }];
        let r = grid_search(&m, &base, &one, 3, 5).unwrap();
        assert_eq!(r.best, one[0]);
        assert_eq!(r.table.len(), 1);
        assert_eq!(r.table[0].fold_scores.len(), 3);
        assert!(r.best_score >= 0.9, "inner score {}", r.best_score);

        // Paper's operating point is in the default grid.
        assert!(default_grid()
            .iter()
            .any(|g| g.c == 0.2 && g.penalty == Penalty::L2));

        // Rerun identity.
        let grid: Vec<GridPoint> = default_grid().into_iter().step_by(15).collect();
        let a = serde_json::to_vec(&grid_search(&m, &base, &grid, 3, 5).unwrap()).unwrap();
        let b = serde_json::to_vec(&grid_search(&m, &base, &grid, 3, 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_search_tie_breaking_prefers_lower_c_then_l2() {
        // Perfectly separable data: every point scores 1.0, ties decide.
        let m = planted_matrix(30, 8, 10, 6);
        let base = PipelineConfig::default().with_seed(6);
        let grid = vec![
            GridPoint { c: 1.0, penalty: Penalty::L1, mi_threshold: 0.15, lasso_strength: 1.2 },
            GridPoint { c: 0.2, penalty: Penalty::L1, mi_threshold: 0.105, lasso_strength: 1.2 },
            GridPoint { c: 0.2, penalty: Penalty::L2, mi_threshold: 0.105, lasso_strength: 1.2 },
        ];
        let r = grid_search(&m, &base, &grid, 3, 6).unwrap();
        if r.table.iter().all(|row| row.mean_score == r.best_score) {
            assert_eq!(r.best, grid[2]);
        }
    }

    #[test]
    fn loocv_shapes_and_planted_accuracy() {
        let m = planted_matrix(30, 8, 30, 7);
        let cfg = PipelineConfig::default().with_seed(7);
        let cv = loocv(&m, &cfg, false).unwrap();
        assert_eq!(cv.folds.len(), 30);
        let pooled: usize = cv.folds.iter().map(|f| f.predictions.len()).sum();
        assert_eq!(pooled, 30);
        assert_eq!(cv.pooled_confusion.total(), 30);
        assert!(cv.mean_test.accuracy >= 0.9, "loocv acc {}", cv.mean_test.accuracy);
        // Mean accuracy equals the mean of per-fold 0/1 accuracies.
        let manual: f64 =
            cv.folds.iter().map(|f| f.test_metrics.accuracy).sum::<f64>() / 30.0;
        assert_eq!(cv.mean_test.accuracy, manual);
    }

    #[test]
    fn welch_t_test_values() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let same = t_test(&a, &a).unwrap();
        assert_eq!(same.t, 0.0);
        assert_eq!(same.p_two_sided, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lo: Vec<f64> = (0..5).map(|_| 1e-6 * rng.gen::<f64>()).collect();
        let hi: Vec<f64> = (0..5).map(|_| 1.0 + 1e-6 * rng.gen::<f64>()).collect();
        let t = t_test(&lo, &hi).unwrap();
        assert!(t.p_two_sided < 0.001, "p = {}", t.p_two_sided);

        let ab = t_test(&lo, &hi).unwrap();
        let ba = t_test(&hi, &lo).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p_two_sided, ba.p_two_sided);

        assert!(matches!(t_test(&[1.0], &a), Err(EvalError::DegenerateGroups)));
    }

    #[test]
    fn chi_square_values() {
        let r = chi_square([[10.0, 0.0], [0.0, 10.0]]).unwrap();
        assert!((r.chi2 - 20.0).abs() < 1e-12);
        assert!(r.p < 1e-4);

        let a = chi_square([[8.0, 2.0], [3.0, 7.0]]).unwrap();
        let t = chi_square([[8.0, 3.0], [2.0, 7.0]]).unwrap();
        assert!((a.chi2 - t.chi2).abs() < 1e-12);

        assert!(matches!(
            chi_square([[0.0, 0.0], [1.0, 1.0]]),
            Err(EvalError::DegenerateGroups)
        ));
    }

    #[test]
    fn cohort_table_rows() {
        let labels: Vec<u8> = (0..20).map(|i| (i >= 10) as u8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: Vec<f64> =
            labels.iter().map(|&l| l as f64 * 0.6 + 0.2 + 0.05 * rng.gen::<f64>()).collect();
        let cat: Vec<u8> = labels.iter().map(|&l| l).collect();
        let rows = cohort_table(
            &labels,
            &[
                ("acoustic predictor".into(), GroupVariable::Continuous(z)),
                ("male sex".into(), GroupVariable::Categorical(cat)),
            ],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].p < 0.001, "predictor p = {}", rows[0].p);
        assert!(rows[0].group0.contains('\u{b1}'));
        assert!(rows[1].group1.contains("100%"));

        // Null construction: no more than 1 of 5 seeds dips under 0.05.
        let mut hits = 0;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let v: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
            let rows = cohort_table(
                &labels,
                &[("noise".into(), GroupVariable::Continuous(v))],
            )
            .unwrap();
            if rows[0].p < 0.05 {
                hits += 1;
            }
        }
        assert!(hits <= 1, "{hits} false positives");
    }
}
