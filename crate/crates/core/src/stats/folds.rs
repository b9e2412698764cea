//! Stratified fold assignment for cross-validation and repeated splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng_from;

/// A k-fold partition of instance indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    /// `assignments[i]` is the fold id (0-based) of instance i.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

fn split_classes(labels: &[u8]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match l {
            1 => pos.push(i),
            0 => neg.push(i),
            other => {
                return Err(Error::invalid(format!(
                    "label at index {i} is {other}, expected 0 or 1"
                )))
            }
        }
    }
    Ok((pos, neg))
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin, and the dealing position
/// carries over between classes so total fold sizes stay within one of each
/// other. Per-fold positive counts land within one of the proportional share.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let (mut pos, mut neg) = split_classes(labels)?;
    if pos.len() < k || neg.len() < k {
        return Err(Error::invalid(format!(
            "each class must have at least k={k} members, got {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }

    let mut rng = rng_from(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut assignments = vec![0usize; labels.len()];
    let mut next_fold = 0usize;
    for class in [&pos, &neg] {
        for &idx in class.iter() {
            assignments[idx] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldPlan {
        assignments,
        k,
        seed,
    })
}

/// Stratified train/test split. The test set takes `test_fraction` of each
/// class, rounded, with at least one member per class on each side.
pub fn stratified_split(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let (mut pos, mut neg) = split_classes(labels)?;
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(
            "stratified split requires at least 2 members per class",
        ));
    }

    let mut rng = rng_from(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [&pos, &neg] {
        let n_test = ((class.len() as f64 * test_fraction).round() as usize)
            .clamp(1, class.len() - 1);
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
