//! AUROC with tie-aware midranks, DeLong variance, and the paired DeLong
//! test for correlated ROC curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal::{normal_quantile, two_sided_p};
use crate::stats::rank::average_ranks;

/// AUROC point estimate with a DeLong confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AurocEstimate {
    pub auroc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// DeLong variance of the AUROC estimate.
    pub variance: f64,
    /// True when the estimate sits on the {0, 1} boundary and the interval
    /// collapses to a point.
    pub degenerate: bool,
}

/// Difference between two correlated AUROCs with its DeLong test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaAuroc {
    pub auroc_a: f64,
    pub auroc_b: f64,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub se: f64,
    /// Variance of each AUROC and their covariance, from the paired 2×2
    /// DeLong covariance matrix.
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub significant: bool,
}

fn validate_binary(labels: &[u8]) -> Result<(usize, usize)> {
    let mut n_pos = 0;
    let mut n_neg = 0;
    for (i, &l) in labels.iter().enumerate() {
        match l {
            0 => n_neg += 1,
            1 => n_pos += 1,
            other => {
                return Err(Error::invalid(format!(
                    "label at index {i} is {other}, expected 0 or 1"
                )))
            }
        }
    }
    Ok((n_pos, n_neg))
}

/// Placement values for the DeLong decomposition.
///
/// `v10[i]` is the probability that positive i outranks a random negative
/// (counting ties as half), `v01[j]` the mirror quantity for negative j.
/// The mean of either vector is the AUROC.
struct Placements {
    auc: f64,
    v10: Vec<f64>,
    v01: Vec<f64>,
}

fn placements(scores: &[f64], labels: &[u8]) -> Result<Placements> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "scores and labels differ in length: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("auroc requires nonempty input"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("auroc requires finite scores"));
    }
    let (m, n) = validate_binary(labels)?;
    if m == 0 || n == 0 {
        return Err(Error::degenerate(
            "auroc undefined: labels contain a single class",
        ));
    }

    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();

    let mut combined = pos.clone();
    combined.extend_from_slice(&neg);
    let r_all = average_ranks(&combined);
    let r_pos = average_ranks(&pos);
    let r_neg = average_ranks(&neg);

    let v10: Vec<f64> = (0..m)
        .map(|i| (r_all[i] - r_pos[i]) / n as f64)
        .collect();
    let v01: Vec<f64> = (0..n)
        .map(|j| 1.0 - (r_all[m + j] - r_neg[j]) / m as f64)
        .collect();

    let auc = v10.iter().sum::<f64>() / m as f64;
    Ok(Placements { auc, v10, v01 })
}

/// Mann–Whitney AUROC with midrank tie handling:
/// P(score⁺ > score⁻) + ½·P(score⁺ = score⁻).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(placements(scores, labels)?.auc)
}

fn sample_cov(a: &[f64], mean_a: f64, b: &[f64], mean_b: f64) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    if n < 2 {
        return 0.0;
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - mean_a) * (y - mean_b))
        .sum();
    s / (n - 1) as f64
}

/// AUROC with a DeLong normal-approximation confidence interval.
///
/// Requires at least two observations per class. At a boundary estimate of
/// exactly 0 or 1 the structural variance vanishes, so the interval collapses
/// to the point estimate and `degenerate` is set.
pub fn delong_ci(scores: &[f64], labels: &[u8], level: f64) -> Result<AurocEstimate> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    let p = placements(scores, labels)?;
    let m = p.v10.len();
    let n = p.v01.len();
    if m < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "delong_ci requires at least 2 per class, got {m} positives and {n} negatives"
        )));
    }

    let s10 = sample_cov(&p.v10, p.auc, &p.v10, p.auc);
    let s01 = sample_cov(&p.v01, p.auc, &p.v01, p.auc);
    let variance = (s10 / m as f64 + s01 / n as f64).max(0.0);

    if p.auc == 0.0 || p.auc == 1.0 {
        return Ok(AurocEstimate {
            auroc: p.auc,
            ci_low: p.auc,
            ci_high: p.auc,
            n_pos: m,
            n_neg: n,
            variance,
            degenerate: true,
        });
    }

    let z = normal_quantile(0.5 + level / 2.0);
    let half = z * variance.sqrt();
    Ok(AurocEstimate {
        auroc: p.auc,
        ci_low: (p.auc - half).max(0.0),
        ci_high: (p.auc + half).min(1.0),
        n_pos: m,
        n_neg: n,
        variance,
        degenerate: false,
    })
}

/// DeLong test for two correlated ROC curves sharing the same labels.
///
/// Computes Δ = AUROC_a − AUROC_b, its variance from the paired placement
/// covariance, a two-sided normal p-value, and a 95% interval.
pub fn delong_paired(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<DeltaAuroc> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::invalid(format!(
            "paired score vectors differ in length: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let pa = placements(scores_a, labels)?;
    let pb = placements(scores_b, labels)?;
    let m = pa.v10.len();
    let n = pa.v01.len();
    if m < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "delong_paired requires at least 2 per class, got {m} positives and {n} negatives"
        )));
    }

    let var_a = sample_cov(&pa.v10, pa.auc, &pa.v10, pa.auc) / m as f64
        + sample_cov(&pa.v01, pa.auc, &pa.v01, pa.auc) / n as f64;
    let var_b = sample_cov(&pb.v10, pb.auc, &pb.v10, pb.auc) / m as f64
        + sample_cov(&pb.v01, pb.auc, &pb.v01, pb.auc) / n as f64;
    let cov_ab = sample_cov(&pa.v10, pa.auc, &pb.v10, pb.auc) / m as f64
        + sample_cov(&pa.v01, pa.auc, &pb.v01, pb.auc) / n as f64;

    let delta = pa.auc - pb.auc;
    let var_d = (var_a + var_b - 2.0 * cov_ab).max(0.0);

    if var_d < 1e-24 {
        // Identical or perfectly co-monotone scores: no sampling variation in
        // the difference. Delta 0 is then trivially insignificant.
        let p_value = if delta == 0.0 { 1.0 } else { 0.0 };
        return Ok(DeltaAuroc {
            auroc_a: pa.auc,
            auroc_b: pb.auc,
            delta,
            ci_low: delta,
            ci_high: delta,
            p_value,
            se: 0.0,
            var_a,
            var_b,
            cov_ab,
            significant: delta != 0.0,
        });
    }

    let se = var_d.sqrt();
    let z_stat = delta / se;
    let z = normal_quantile(0.975);
    let ci_low = delta - z * se;
    let ci_high = delta + z * se;
    Ok(DeltaAuroc {
        auroc_a: pa.auc,
        auroc_b: pb.auc,
        delta,
        ci_low,
        ci_high,
        p_value: two_sided_p(z_stat),
        se,
        var_a,
        var_b,
        cov_ab,
        significant: ci_low > 0.0 || ci_high < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::util::rng_from;

    /// All-pairs oracle: count wins and half-count ties over every
    /// positive-negative pair.
    fn auroc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation_is_one() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [0u8, 0, 1, 1];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn four_point_example_matches_pair_enumeration() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0u8, 0, 1, 1];
        let got = auroc(&scores, &labels).unwrap();
        assert!((got - 0.75).abs() < 1e-15);
        assert!((got - auroc_oracle(&scores, &labels)).abs() < 1e-15);
    }

    #[test]
    fn all_ties_give_half() {
        let scores = [2.0; 6];
        let labels = [0u8, 1, 0, 1, 0, 1];
        assert!((auroc(&scores, &labels).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_degenerate() {
        let scores = [0.1, 0.2, 0.3];
        assert!(matches!(
            auroc(&scores, &[1u8, 1, 1]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn auroc_is_invariant_under_monotone_transforms() {
        let mut rng = rng_from(21);
        for _ in 0..30 {
            let n = rng.gen_range(6..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            if labels.iter().all(|&l| l == 0) || labels.iter().all(|&l| l == 1) {
                continue;
            }
            let base = auroc(&scores, &labels).unwrap();
            let exp_scores: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
            assert!((auroc(&exp_scores, &labels).unwrap() - base).abs() < 1e-12);
            assert!((auroc(&affine, &labels).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn delong_boundary_is_degenerate_point_interval() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [0u8, 0, 1, 1];
        let est = delong_ci(&scores, &labels, 0.95).unwrap();
        assert_eq!(est.auroc, 1.0);
        assert_eq!(est.ci_low, 1.0);
        assert_eq!(est.ci_high, 1.0);
        assert!(est.degenerate);
    }

    #[test]
    fn delong_interval_contains_estimate_and_is_clipped() {
        let mut rng = rng_from(5);
        let n = 40;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 * 0.8 + rng.gen_range(-1.0..1.0))
            .collect();
        let est = delong_ci(&scores, &labels, 0.95).unwrap();
        assert!(est.ci_low <= est.auroc && est.auroc <= est.ci_high);
        assert!(est.ci_low >= 0.0 && est.ci_high <= 1.0);
        assert!(est.variance > 0.0);
    }

    #[test]
    fn duplicating_the_dataset_halves_the_variance() {
        let mut rng = rng_from(9);
        let n = 60;
        let labels: Vec<u8> = (0..n).map(|i| if i < 24 { 1 } else { 0 }).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 + rng.gen_range(-1.5..1.5))
            .collect();
        let base = delong_ci(&scores, &labels, 0.95).unwrap();
        let mut scores2 = scores.clone();
        scores2.extend_from_slice(&scores);
        let mut labels2 = labels.clone();
        labels2.extend_from_slice(&labels);
        let doubled = delong_ci(&scores2, &labels2, 0.95).unwrap();
        let ratio = doubled.variance / base.variance;
        assert!(
            (0.45..=0.55).contains(&ratio),
            "variance ratio {ratio} not near 1/2"
        );
    }

    #[test]
    fn paired_identity_gives_zero_delta_p_one() {
        let scores = [0.2, 0.9, 0.4, 0.7, 0.1, 0.6];
        let labels = [0u8, 1, 0, 1, 0, 1];
        let d = delong_paired(&scores, &scores, &labels).unwrap();
        assert_eq!(d.delta, 0.0);
        assert_eq!(d.p_value, 1.0);
        assert!(!d.significant);
    }

    #[test]
    fn paired_variances_match_single_curve_variances() {
        let mut rng = rng_from(13);
        let n = 50;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let a: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 * 0.9 + rng.gen_range(-1.0..1.0))
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = delong_paired(&a, &b, &labels).unwrap();
        let ea = delong_ci(&a, &labels, 0.95).unwrap();
        let eb = delong_ci(&b, &labels, 0.95).unwrap();
        assert!((d.var_a - ea.variance).abs() < 1e-15);
        assert!((d.var_b - eb.variance).abs() < 1e-15);
        assert_eq!(d.significant, d.ci_low > 0.0 || d.ci_high < 0.0);
    }

    #[test]
    fn informative_vs_noise_scores_separate_on_synthetic_data() {
        // Known-strength signal vs pure noise: the CI should exclude zero in
        // nearly all repetitions.
        let mut rng = rng_from(31);
        let mut rejections = 0;
        let sims = 200;
        for _ in 0..sims {
            let n = 500;
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let informative: Vec<f64> = labels
                .iter()
                .map(|&l| l as f64 * 1.19 + box_muller(&mut rng))
                .collect();
            let noise: Vec<f64> = (0..n).map(|_| box_muller(&mut rng)).collect();
            let d = delong_paired(&informative, &noise, &labels).unwrap();
            if d.significant {
                rejections += 1;
            }
        }
        assert!(
            rejections as f64 / sims as f64 >= 0.95,
            "only {rejections}/{sims} simulations rejected"
        );
    }

    fn box_muller(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
