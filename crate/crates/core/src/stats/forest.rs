//! Random forest classifier: bootstrap-sampled trees, Gini splits over
//! random feature subsets, class-weight balancing, probability output.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from};
use rand::Rng;

/// Forest hyperparameters, one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyperParams {
    pub n_estimators: usize,
    pub max_features: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl std::fmt::Display for ForestHyperParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trees={} max_features={} max_depth={} min_leaf={}",
            self.n_estimators, self.max_features, self.max_depth, self.min_samples_leaf
        )
    }
}

/// The full tuning grid used for wide external-feature matrices: all
/// combinations of trees {200,300,400,500,1000}, max features {10,25,50},
/// depth {20,50}, and minimum leaf size {5,20}.
pub fn default_grid() -> Vec<ForestHyperParams> {
    let mut grid = Vec::new();
    for &n_estimators in &[200, 300, 400, 500, 1000] {
        for &max_features in &[10, 25, 50] {
            for &max_depth in &[20, 50] {
                for &min_samples_leaf in &[5, 20] {
                    grid.push(ForestHyperParams {
                        n_estimators,
                        max_features,
                        max_depth,
                        min_samples_leaf,
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Class-weighted positive fraction of the training samples that
        /// reached this leaf.
        positive_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { positive_fraction } => *positive_fraction,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict_row(row)
                } else {
                    right.predict_row(row)
                }
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    /// Effective hyperparameters (after any max_features clamp).
    pub params: ForestHyperParams,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl ForestModel {
    /// Mean over trees of the leaf positive fraction.
    pub fn predict_proba(&self, features: &DMatrix<f64>) -> Vec<f64> {
        let p = features.ncols();
        let mut row = vec![0.0; p];
        (0..features.nrows())
            .map(|i| {
                for j in 0..p {
                    row[j] = features[(i, j)];
                }
                let sum: f64 = self.trees.iter().map(|t| t.predict_row(&row)).sum();
                sum / self.trees.len() as f64
            })
            .collect()
    }

    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(TreeNode::depth).max().unwrap_or(0)
    }
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    class_weight: [f64; 2],
    max_features: usize,
    max_depth: usize,
    min_samples_leaf: usize,
    feature_scratch: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn leaf(&self, indices: &[usize]) -> TreeNode {
        let mut w_pos = 0.0;
        let mut w_neg = 0.0;
        for &i in indices {
            if self.labels[i] == 1 {
                w_pos += self.class_weight[1];
            } else {
                w_neg += self.class_weight[0];
            }
        }
        let total = w_pos + w_neg;
        TreeNode::Leaf {
            positive_fraction: if total > 0.0 { w_pos / total } else { 0.5 },
        }
    }

    fn build(&mut self, indices: &mut Vec<usize>, depth: usize, rng: &mut impl Rng) -> TreeNode {
        let n = indices.len();
        let pure = {
            let first = self.labels[indices[0]];
            indices.iter().all(|&i| self.labels[i] == first)
        };
        if pure || depth >= self.max_depth || n < 2 * self.min_samples_leaf {
            return self.leaf(indices);
        }

        // Uniform random feature subset via partial Fisher-Yates, then
        // sorted so the scan order is independent of the draw order.
        let p = self.columns.len();
        let mf = self.max_features.min(p);
        for (i, v) in self.feature_scratch.iter_mut().enumerate() {
            *v = i;
        }
        for i in 0..mf {
            let j = rng.gen_range(i..p);
            self.feature_scratch.swap(i, j);
        }
        let mut candidates: Vec<usize> = self.feature_scratch[..mf].to_vec();
        candidates.sort_unstable();

        let parent_impurity = {
            let (w1, w0) = self.weighted_counts(indices);
            gini(w1, w0)
        };

        // Best split so far as (score, left count, threshold, feature).
        // Ties on the score are broken by the value-based keys first, so the
        // chosen split does not depend on feature column order; the feature
        // index is only a last-resort tie-break for identical value layouts.
        let mut best: Option<(f64, usize, f64, usize)> = None;
        let mut sortable: Vec<(f64, u8)> = Vec::with_capacity(n);
        for &f in &candidates {
            let col = &self.columns[f];
            sortable.clear();
            sortable.extend(indices.iter().map(|&i| (col[i], self.labels[i])));
            sortable.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_w1 = 0.0;
            let mut left_w0 = 0.0;
            let (total_w1, total_w0) = self.weighted_counts(indices);
            for i in 1..n {
                let (v_prev, l_prev) = sortable[i - 1];
                if l_prev == 1 {
                    left_w1 += self.class_weight[1];
                } else {
                    left_w0 += self.class_weight[0];
                }
                let v = sortable[i].0;
                if v <= v_prev {
                    continue;
                }
                if i < self.min_samples_leaf || n - i < self.min_samples_leaf {
                    continue;
                }
                let right_w1 = total_w1 - left_w1;
                let right_w0 = total_w0 - left_w0;
                let wl = left_w1 + left_w0;
                let wr = right_w1 + right_w0;
                let w = wl + wr;
                let score =
                    wl / w * gini(left_w1, left_w0) + wr / w * gini(right_w1, right_w0);
                if score >= parent_impurity - 1e-12 {
                    continue;
                }
                let threshold = (v_prev + v) / 2.0;
                let replace = match best {
                    None => true,
                    Some((bs, bc, bt, _)) => {
                        score < bs
                            || (score == bs && (i < bc || (i == bc && threshold < bt)))
                    }
                };
                if replace {
                    best = Some((score, i, threshold, f));
                }
            }
        }

        let Some((_, _, threshold, feature)) = best else {
            return self.leaf(indices);
        };

        let col = &self.columns[feature];
        let mut left: Vec<usize> = indices.iter().copied().filter(|&i| col[i] <= threshold).collect();
        let mut right: Vec<usize> = indices.iter().copied().filter(|&i| col[i] > threshold).collect();
        let left_node = self.build(&mut left, depth + 1, rng);
        let right_node = self.build(&mut right, depth + 1, rng);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left_node),
            right: Box::new(right_node),
        }
    }

    fn weighted_counts(&self, indices: &[usize]) -> (f64, f64) {
        let mut w1 = 0.0;
        let mut w0 = 0.0;
        for &i in indices {
            if self.labels[i] == 1 {
                w1 += self.class_weight[1];
            } else {
                w0 += self.class_weight[0];
            }
        }
        (w1, w0)
    }
}

fn gini(w1: f64, w0: f64) -> f64 {
    let w = w1 + w0;
    if w <= 0.0 {
        return 0.0;
    }
    let p1 = w1 / w;
    let p0 = w0 / w;
    1.0 - p1 * p1 - p0 * p0
}

/// Fit a random forest on binary labels.
///
/// Trees are grown on bootstrap resamples; each node draws a fresh uniform
/// feature subset of size `max_features`. Impurity uses balanced class
/// weights (each class totals n/2 over the training set). A `max_features`
/// larger than the feature count is clamped with a warning.
pub fn fit_random_forest(
    features: &DMatrix<f64>,
    labels: &[u8],
    params: &ForestHyperParams,
    seed: u64,
) -> Result<ForestModel> {
    let n = features.nrows();
    let p = features.ncols();
    if n == 0 || p == 0 {
        return Err(Error::invalid("forest requires nonempty features"));
    }
    if n != labels.len() {
        return Err(Error::invalid(format!(
            "feature rows ({n}) and labels ({}) differ",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    if params.n_estimators == 0 || params.max_features == 0 || params.max_depth == 0
        || params.min_samples_leaf == 0
    {
        return Err(Error::invalid("forest hyperparameters must be positive"));
    }

    let mut warnings = Vec::new();
    let mut effective = *params;
    if params.max_features > p {
        effective.max_features = p;
        warnings.push(format!(
            "max_features {} exceeds feature count {p}; clamped to {p}",
            params.max_features
        ));
    }

    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = n - n_pos;
    let class_weight = [
        if n_neg > 0 { n as f64 / (2.0 * n_neg as f64) } else { 1.0 },
        if n_pos > 0 { n as f64 / (2.0 * n_pos as f64) } else { 1.0 },
    ];

    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| features.column(j).iter().copied().collect())
        .collect();

    let mut trees = Vec::with_capacity(effective.n_estimators);
    for t in 0..effective.n_estimators {
        let mut rng = rng_from(derive_seed(seed, &format!("tree-{t}")));
        let mut indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = TreeBuilder {
            columns: &columns,
            labels,
            class_weight,
            max_features: effective.max_features,
            max_depth: effective.max_depth,
            min_samples_leaf: effective.min_samples_leaf,
            feature_scratch: (0..p).collect(),
        };
        trees.push(builder.build(&mut indices, 0, &mut rng));
    }

    Ok(ForestModel {
        trees,
        params: effective,
        seed,
        warnings,
    })
}
