//! Two-stage feature selection: stability-filtered mutual-information
//! thresholding, then L1-driven recursive feature elimination down to a
//! fixed feature count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::synth::splitmix64;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("need at least {needed} rows, got {got}")]
    DegenerateInput { needed: usize, got: usize },
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("stage 1 left {got} survivors but target is {target}")]
    TooFewSurvivors { got: usize, target: usize },
    #[error("coordinate descent did not converge; last step {last_step:e}")]
    NonConvergence { last_step: f64 },
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Minimum MI in nats; both the full-set and subset-average scores must
    /// strictly exceed it.
    pub mi_threshold: f64,
    pub n_subsets: usize,
    pub subset_fraction: f64,
    /// Inverse regularization strength of the L1 model used for RFE.
    pub lasso_strength: f64,
    pub target_k: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            mi_threshold: 0.105,
            n_subsets: 15,
            subset_fraction: 0.8,
            lasso_strength: 1.2,
            target_k: 5,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<(), SelectionError> {
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(SelectionError::BadConfig("subset_fraction must be in (0, 1]"));
        }
        if self.target_k < 1 {
            return Err(SelectionError::BadConfig("target_k must be >= 1"));
        }
        if self.n_subsets < 1 {
            return Err(SelectionError::BadConfig("n_subsets must be >= 1"));
        }
        Ok(())
    }
}

/// Everything the two stages decided, reproducible from (matrix, config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mi_full: BTreeMap<String, f64>,
    pub mi_subset_avg: BTreeMap<String, f64>,
    pub stage1_survivors: Vec<String>,
    /// True when the stability filter retained nothing; RFE then errors.
    pub stage1_empty: bool,
    pub rfe_elimination_order: Vec<String>,
    pub selected: Vec<String>,
    pub config: SelectionConfig,
    pub seed: u64,
}

impl PartialEq for SelectionConfig {
    fn eq(&self, other: &Self) -> bool {
        self.mi_threshold == other.mi_threshold
            && self.n_subsets == other.n_subsets
            && self.subset_fraction == other.subset_fraction
            && self.lasso_strength == other.lasso_strength
            && self.target_k == other.target_k
            && self.seed == other.seed
    }
}

const MI_NEIGHBORS: usize = 3;

fn check_labels(labels: &[u8]) -> Result<(), SelectionError> {
    if !labels.iter().any(|&l| l == 0) || !labels.iter().any(|&l| l == 1) {
        return Err(SelectionError::SingleClassLabels);
    }
    Ok(())
}

/// Nearest-neighbor MI estimator for a continuous column against binary
/// labels (k = 3). A rank-ordered infinitesimal jitter (sigma = 1e-10 times
/// the column std, drawn from `seed`) breaks exact value ties by sorted
/// index, so the score depends only on the (value, label) multiset — not on
/// row order. Negative estimates clip to 0.
pub fn mi_score(column: &[f64], labels: &[u8], seed: u64) -> Result<f64, SelectionError> {
    if column.len() < 4 || column.len() != labels.len() {
        return Err(SelectionError::DegenerateInput { needed: 4, got: column.len() });
    }
    check_labels(labels)?;

    let n = column.len();
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        // Constant column carries no information by convention.
        return Ok(0.0);
    }

    // Jitter assigned by value rank: stable under row permutations.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1e-10 * var.sqrt();
    let mut x = column.to_vec();
    for &i in &order {
        x[i] += sigma * rng.gen::<f64>();
    }

    // Per point: radius just under the k-th same-class neighbor distance,
    // then count all points (self included) strictly inside it.
    let mut radius = vec![0.0f64; n];
    let mut k_used = vec![0usize; n];
    let mut class_count = vec![0usize; n];
    for label in [0u8, 1u8] {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
        for &i in &idx {
            class_count[i] = idx.len();
            let k = MI_NEIGHBORS.min(idx.len() - 1);
            k_used[i] = k;
            let mut dists: Vec<f64> =
                idx.iter().filter(|&&j| j != i).map(|&j| (x[j] - x[i]).abs()).collect();
            dists.sort_by(f64::total_cmp);
            radius[i] = next_down(dists[k - 1]);
        }
    }
    // Accumulate in value-rank order so the float sums (and therefore the
    // score) are bit-identical under row permutations.
    let mut sum_k = 0.0;
    let mut sum_label = 0.0;
    let mut sum_m = 0.0;
    for &i in &order {
        sum_k += digamma(k_used[i] as f64);
        sum_label += digamma(class_count[i] as f64);
        let m = (0..n).filter(|&j| (x[j] - x[i]).abs() <= radius[i]).count();
        sum_m += digamma(m as f64);
    }
    let mi = digamma(n as f64) + sum_k / n as f64 - sum_label / n as f64 - sum_m / n as f64;
    Ok(mi.max(0.0))
}

fn next_down(v: f64) -> f64 {
    if v == 0.0 { 0.0 } else { f64::from_bits(v.to_bits() - 1) }
}

fn column_seed(seed: u64, j: usize) -> u64 {
    seed ^ splitmix64(j as u64 + 1)
}

fn mi_all_columns(
    rows: &[Vec<f64>],
    labels: &[u8],
    n_cols: usize,
    seed: u64,
) -> Result<Vec<f64>, SelectionError> {
    (0..n_cols)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            mi_score(&col, labels, column_seed(seed, j))
        })
        .collect()
}

/// Stage 1: a feature survives iff its full-set MI and its average MI over
/// `n_subsets` seeded subsamples (each floor(fraction * n) rows, drawn
/// without replacement after a fresh shuffle) both strictly exceed the
/// threshold. Returns (mi_full, mi_subset_avg, survivor column indices).
pub fn stability_filter(
    matrix: &FeatureMatrix,
    cfg: &SelectionConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>), SelectionError> {
    cfg.validate()?;
    check_labels(&matrix.labels)?;
    let n = matrix.n_rows();
    let take = (cfg.subset_fraction * n as f64).floor() as usize;
    if take < 4 {
        return Err(SelectionError::DegenerateInput { needed: 4, got: take });
    }

    let mi_full = mi_all_columns(&matrix.rows, &matrix.labels, matrix.n_cols(), cfg.seed)?;

    let mut subset_sum = vec![0.0; matrix.n_cols()];
    let mut used_subsets = 0usize;
    for s in 0..cfg.n_subsets {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ splitmix64(s as u64 + 1));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm.truncate(take);
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| matrix.rows[i].clone()).collect();
        let labels: Vec<u8> = perm.iter().map(|&i| matrix.labels[i]).collect();
        if check_labels(&labels).is_err() {
            // A pathological draw with one class says nothing; skip it.
            continue;
        }
        let scores = mi_all_columns(&rows, &labels, matrix.n_cols(), cfg.seed)?;
        for (acc, v) in subset_sum.iter_mut().zip(&scores) {
            *acc += v;
        }
        used_subsets += 1;
    }
    if used_subsets == 0 {
        return Err(SelectionError::SingleClassLabels);
    }
    let mi_avg: Vec<f64> = subset_sum.iter().map(|s| s / used_subsets as f64).collect();

    let survivors: Vec<usize> = (0..matrix.n_cols())
        .filter(|&j| mi_full[j] > cfg.mi_threshold && mi_avg[j] > cfg.mi_threshold)
        .collect();
    Ok((mi_full, mi_avg, survivors))
}

fn standardize_columns(rows: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    let n = rows.len();
    cols.iter()
        .map(|&j| {
            let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            if std == 0.0 {
                vec![0.0; n]
            } else {
                vals.iter().map(|v| (v - mean) / std).collect()
            }
        })
        .collect()
}

/// L1-regularized logistic regression by coordinate-wise proximal (Newton)
/// descent on internally standardized columns. Objective:
/// `strength * sum log(1 + exp(-y z)) + ||theta||_1`, intercept unpenalized,
/// so strength -> 0 shrinks every coefficient to zero. Returns |coefficient|
/// per column (in `cols` order).
pub fn l1_importance(
    rows: &[Vec<f64>],
    labels: &[u8],
    cols: &[usize],
    strength: f64,
) -> Result<Vec<f64>, SelectionError> {
    check_labels(labels)?;
    if cols.is_empty() {
        return Ok(Vec::new());
    }
    let x = standardize_columns(rows, cols); // x[j][i]
    let f = crate::model::fit_l1_columns(&x, labels, strength, 1e-6, 10_000);
    if !f.converged {
        return Err(SelectionError::NonConvergence { last_step: f.last_step });
    }
    Ok(f.theta.iter().map(|t| t.abs()).collect())
}

/// Stage 2: refit the L1 model on the current set and drop exactly one
/// least-important feature per iteration (ties drop the later column) until
/// `target_k` remain. Returns (elimination order, selected), both as column
/// indices in matrix order.
pub fn rfe(
    matrix: &FeatureMatrix,
    survivors: &[usize],
    cfg: &SelectionConfig,
) -> Result<(Vec<usize>, Vec<usize>), SelectionError> {
    if survivors.len() < cfg.target_k {
        return Err(SelectionError::TooFewSurvivors {
            got: survivors.len(),
            target: cfg.target_k,
        });
    }
    let mut current = survivors.to_vec();
    let mut eliminated = Vec::new();
    while current.len() > cfg.target_k {
        let imp = l1_importance(&matrix.rows, &matrix.labels, &current, cfg.lasso_strength)?;
        // Later column wins ties, so iterate back to front with >=.
        let mut worst = current.len() - 1;
        for j in (0..current.len()).rev() {
            if imp[j] < imp[worst] {
                worst = j;
            }
        }
        eliminated.push(current.remove(worst));
    }
    Ok((eliminated, current))
}

/// Run both stages and package the result.
pub fn run_selection(
    matrix: &FeatureMatrix,
    cfg: &SelectionConfig,
) -> Result<SelectionReport, SelectionError> {
    let (mi_full, mi_avg, survivors) = stability_filter(matrix, cfg)?;
    let stage1_empty = survivors.is_empty();
    let (eliminated, selected) = rfe(matrix, &survivors, cfg)?;
    let name = |&j: &usize| matrix.names[j].clone();
    Ok(SelectionReport {
        mi_full: matrix.names.iter().cloned().zip(mi_full).collect(),
        mi_subset_avg: matrix.names.iter().cloned().zip(mi_avg).collect(),
        stage1_survivors: survivors.iter().map(name).collect(),
        stage1_empty,
        rfe_elimination_order: eliminated.iter().map(name).collect(),
        selected: selected.iter().map(name).collect(),
        config: cfg.clone(),
        seed: cfg.seed,
    })
}
