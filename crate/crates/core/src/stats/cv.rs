//! Nested cross-validation and repeated stratified splits, scoring held-out
//! predictions with AUROC.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::folds::{stratified_kfold, stratified_split};
use crate::stats::forest::{fit_random_forest, ForestHyperParams};
use crate::stats::logistic::{fit_logistic, ClassWeighting};
use crate::stats::roc::{auroc, delong_ci, AurocEstimate};
use crate::util::derive_seed;

/// Which classifier the harness trains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelSpec {
    Logistic { weighting: ClassWeighting },
    Forest { grid: Vec<ForestHyperParams> },
}

impl ModelSpec {
    fn describe_cell(&self, cell: usize) -> String {
        match self {
            ModelSpec::Logistic { weighting } => format!("logistic({weighting})"),
            ModelSpec::Forest { grid } => format!("forest({})", grid[cell]),
        }
    }

    fn n_cells(&self) -> usize {
        match self {
            ModelSpec::Logistic { .. } => 1,
            ModelSpec::Forest { grid } => grid.len(),
        }
    }
}

/// One outer fold's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub chosen: String,
    pub auroc: f64,
}

/// Result of a nested cross-validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedCvResult {
    /// DeLong interval on the pooled held-out predictions.
    pub pooled: AurocEstimate,
    /// Pooled held-out prediction per input row, in input order. Every row
    /// appears in exactly one test fold, so none are missing.
    pub predictions: Vec<f64>,
    pub folds: Vec<FoldReport>,
}

/// Result of repeated stratified train/test splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: usize,
    pub chosen: String,
    pub auroc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatedSplitResult {
    pub mean: f64,
    /// Sample standard deviation over splits (0 for a single split).
    pub sd: f64,
    pub splits: Vec<SplitReport>,
}

fn subset_rows(features: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), features.ncols(), |i, j| features[(rows[i], j)])
}

fn subset_labels(labels: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| labels[i]).collect()
}

fn fit_predict(
    model: &ModelSpec,
    cell: usize,
    x_train: &DMatrix<f64>,
    y_train: &[u8],
    x_test: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    match model {
        ModelSpec::Logistic { weighting } => {
            let fitted = fit_logistic(x_train, y_train, *weighting)?;
            Ok(fitted.predict_proba(x_test))
        }
        ModelSpec::Forest { grid } => {
            let fitted = fit_random_forest(x_train, y_train, &grid[cell], seed)?;
            Ok(fitted.predict_proba(x_test))
        }
    }
}

/// Grid search by mean validation AUROC over an inner stratified k-fold.
/// Returns the winning cell index (ties favor the earlier grid entry).
fn select_cell(
    model: &ModelSpec,
    x_train: &DMatrix<f64>,
    y_train: &[u8],
    inner_k: usize,
    seed: u64,
) -> Result<usize> {
    let cells = model.n_cells();
    if cells == 0 {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    if cells == 1 {
        return Ok(0);
    }
    let plan = stratified_kfold(y_train, inner_k, derive_seed(seed, "inner-folds"))?;
    let mut best = (0usize, f64::NEG_INFINITY);
    for cell in 0..cells {
        let mut total = 0.0;
        for fold in 0..inner_k {
            let tr = plan.train_indices(fold);
            let te = plan.test_indices(fold);
            let preds = fit_predict(
                model,
                cell,
                &subset_rows(x_train, &tr),
                &subset_labels(y_train, &tr),
                &subset_rows(x_train, &te),
                derive_seed(seed, &format!("inner-fit-c{cell}-f{fold}")),
            )?;
            total += auroc(&preds, &subset_labels(y_train, &te))?;
        }
        let mean = total / inner_k as f64;
        if mean > best.1 {
            best = (cell, mean);
        }
    }
    Ok(best.0)
}

/// Nested cross-validation: an outer stratified k-fold for evaluation, an
/// inner stratified k-fold per outer fold for hyperparameter selection.
/// Held-out predictions from all outer folds are pooled and scored with a
/// DeLong interval.
pub fn nested_cv_auroc(
    features: &DMatrix<f64>,
    labels: &[u8],
    outer_k: usize,
    inner_k: usize,
    model: &ModelSpec,
    seed: u64,
) -> Result<NestedCvResult> {
    if features.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "feature rows ({}) and labels ({}) differ",
            features.nrows(),
            labels.len()
        )));
    }
    let outer = stratified_kfold(labels, outer_k, derive_seed(seed, "outer-folds"))?;

    let mut pooled = vec![f64::NAN; labels.len()];
    let mut folds = Vec::with_capacity(outer_k);
    for fold in 0..outer_k {
        let tr = outer.train_indices(fold);
        let te = outer.test_indices(fold);
        let x_train = subset_rows(features, &tr);
        let y_train = subset_labels(labels, &tr);

        let cell = select_cell(
            model,
            &x_train,
            &y_train,
            inner_k,
            derive_seed(seed, &format!("select-{fold}")),
        )?;
        let preds = fit_predict(
            model,
            cell,
            &x_train,
            &y_train,
            &subset_rows(features, &te),
            derive_seed(seed, &format!("refit-{fold}")),
        )?;
        let fold_auroc = auroc(&preds, &subset_labels(labels, &te))?;
        for (&i, &p) in te.iter().zip(&preds) {
            pooled[i] = p;
        }
        folds.push(FoldReport {
            fold,
            n_test: te.len(),
            chosen: model.describe_cell(cell),
            auroc: fold_auroc,
        });
    }

    debug_assert!(pooled.iter().all(|p| p.is_finite()));
    let pooled_estimate = delong_ci(&pooled, labels, 0.95)?;
    Ok(NestedCvResult {
        pooled: pooled_estimate,
        predictions: pooled,
        folds,
    })
}

/// Repeated stratified train/test splits (the protocol behind mean ± sd
/// tables): per split, tune on the training side if the grid has more than
/// one cell, fit, and score the held-out side.
pub fn repeated_split_auroc(
    features: &DMatrix<f64>,
    labels: &[u8],
    n_splits: usize,
    test_fraction: f64,
    inner_k: usize,
    model: &ModelSpec,
    seed: u64,
) -> Result<RepeatedSplitResult> {
    if n_splits == 0 {
        return Err(Error::invalid("n_splits must be positive"));
    }
    let mut splits = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let (tr, te) = stratified_split(labels, test_fraction, derive_seed(seed, &format!("split-{s}")))?;
        let x_train = subset_rows(features, &tr);
        let y_train = subset_labels(labels, &tr);
        let cell = select_cell(
            model,
            &x_train,
            &y_train,
            inner_k,
            derive_seed(seed, &format!("split-select-{s}")),
        )?;
        let preds = fit_predict(
            model,
            cell,
            &x_train,
            &y_train,
            &subset_rows(features, &te),
            derive_seed(seed, &format!("split-fit-{s}")),
        )?;
        let a = auroc(&preds, &subset_labels(labels, &te))?;
        splits.push(SplitReport {
            split: s,
            chosen: model.describe_cell(cell),
            auroc: a,
        });
    }
    let mean = splits.iter().map(|s| s.auroc).sum::<f64>() / n_splits as f64;
    let sd = if n_splits > 1 {
        (splits
            .iter()
            .map(|s| (s.auroc - mean).powi(2))
            .sum::<f64>()
            / (n_splits - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(RepeatedSplitResult { mean, sd, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::util::rng_from;

    #[test]
    fn leaked_labels_reach_the_ceiling() {
        let n = 100;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| labels[i] as f64);
        let model = ModelSpec::Logistic {
            weighting: ClassWeighting::None,
        };
        let res = nested_cv_auroc(&x, &labels, 5, 3, &model, 42).unwrap();
        assert_eq!(res.pooled.auroc, 1.0);
        assert!(res.pooled.degenerate);
    }

    #[test]
    fn every_instance_is_predicted_exactly_once() {
        let mut rng = rng_from(2);
        let n = 120;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let model = ModelSpec::Logistic {
            weighting: ClassWeighting::None,
        };
        let res = nested_cv_auroc(&x, &labels, 4, 3, &model, 7).unwrap();
        let total: usize = res.folds.iter().map(|f| f.n_test).sum();
        assert_eq!(total, n);
    }

    #[test]
    fn forest_grid_search_runs_and_reports_chosen_cell() {
        let mut rng = rng_from(3);
        let n = 200;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(0.0..1.0));
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(x[(i, 0)] + 0.5 * x[(i, 1)] > 0.7))
            .collect();
        let grid = vec![
            ForestHyperParams {
                n_estimators: 10,
                max_features: 2,
                max_depth: 3,
                min_samples_leaf: 5,
            },
            ForestHyperParams {
                n_estimators: 20,
                max_features: 3,
                max_depth: 5,
                min_samples_leaf: 5,
            },
        ];
        let model = ModelSpec::Forest { grid };
        let res = nested_cv_auroc(&x, &labels, 3, 2, &model, 11).unwrap();
        assert!(res.pooled.auroc > 0.8, "auroc {}", res.pooled.auroc);
        for fold in &res.folds {
            assert!(fold.chosen.starts_with("forest("));
        }
    }

    #[test]
    fn repeated_splits_report_mean_and_sd() {
        let mut rng = rng_from(4);
        let n = 150;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(x[(i, 0)] + rng.gen_range(-0.8..0.8) > 0.0))
            .collect();
        let model = ModelSpec::Logistic {
            weighting: ClassWeighting::None,
        };
        let res = repeated_split_auroc(&x, &labels, 3, 0.2, 3, &model, 19).unwrap();
        assert_eq!(res.splits.len(), 3);
        assert!(res.mean > 0.6);
        assert!(res.sd >= 0.0);
        let manual_mean = res.splits.iter().map(|s| s.auroc).sum::<f64>() / 3.0;
        assert!((res.mean - manual_mean).abs() < 1e-12);
    }

    #[test]
    fn determinism_across_calls() {
        let mut rng = rng_from(5);
        let n = 90;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let model = ModelSpec::Logistic {
            weighting: ClassWeighting::RareEvent,
        };
        let a = nested_cv_auroc(&x, &labels, 3, 2, &model, 99).unwrap();
        let b = nested_cv_auroc(&x, &labels, 3, 2, &model, 99).unwrap();
        assert_eq!(a.pooled.auroc, b.pooled.auroc);
        assert_eq!(a.pooled.ci_low, b.pooled.ci_low);
    }
}
