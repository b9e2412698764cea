//! Logistic regression by damped Newton (IRLS) with optional class
//! reweighting for rare-event outcomes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation weighting scheme.
///
/// `RareEvent` gives each class a total weight of n/2, so a rare positive
/// class contributes as much to the fit as the common class. This is the
/// prior-corrected weighting with target prevalence 0.5; `PriorCorrected`
/// generalizes it to any target prevalence (the sample prevalence as target
/// reproduces the unweighted fit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassWeighting {
    None,
    RareEvent,
    PriorCorrected { target_prevalence: f64 },
}

impl std::fmt::Display for ClassWeighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassWeighting::None => write!(f, "none"),
            ClassWeighting::RareEvent => write!(f, "rare_event"),
            ClassWeighting::PriorCorrected { target_prevalence } => {
                write!(f, "prior_corrected(tau={target_prevalence})")
            }
        }
    }
}

/// Coefficients can not grow past this magnitude without the fitted
/// probabilities being numerically saturated at 0 or 1, which on finite data
/// only happens under (quasi-)separation.
const COEF_CAP: f64 = 30.0;

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-6;

/// A fitted logistic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    /// Slope per feature column.
    pub weights: Vec<f64>,
    pub weighting: ClassWeighting,
    pub iterations: usize,
    /// Euclidean norm of the weighted log-likelihood gradient at the
    /// returned coefficients.
    pub grad_norm: f64,
    pub converged: bool,
    /// Set when coefficients diverged past the cap, indicating separation;
    /// the reported coefficients are clamped.
    pub separated: bool,
    /// Covariance of (intercept, slopes...) from the inverse observed
    /// information; absent for separated fits.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl LogisticModel {
    pub fn linear_predictor(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| {
                let mut eta = self.intercept;
                for j in 0..features.ncols() {
                    eta += self.weights[j] * features[(i, j)];
                }
                eta
            })
            .collect()
    }

    pub fn predict_proba(&self, features: &DMatrix<f64>) -> Vec<f64> {
        self.linear_predictor(features)
            .into_iter()
            .map(sigmoid)
            .collect()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(eta)) without overflow.
fn log1p_exp(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn observation_weights(labels: &[u8], weighting: ClassWeighting) -> Result<Vec<f64>> {
    let n = labels.len() as f64;
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = n - n_pos;
    let (w_pos, w_neg) = match weighting {
        ClassWeighting::None => (1.0, 1.0),
        ClassWeighting::RareEvent => (n / (2.0 * n_pos), n / (2.0 * n_neg)),
        ClassWeighting::PriorCorrected { target_prevalence } => {
            if !(0.0 < target_prevalence && target_prevalence < 1.0) {
                return Err(Error::invalid(format!(
                    "target prevalence must be in (0,1), got {target_prevalence}"
                )));
            }
            let ybar = n_pos / n;
            (target_prevalence / ybar, (1.0 - target_prevalence) / (1.0 - ybar))
        }
    };
    Ok(labels
        .iter()
        .map(|&l| if l == 1 { w_pos } else { w_neg })
        .collect())
}

fn weighted_loglik(eta: &DVector<f64>, y: &[u8], w: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..y.len() {
        ll += w[i] * (y[i] as f64 * eta[i] - log1p_exp(eta[i]));
    }
    ll
}

/// Fit a logistic regression of `labels` on `features` (the intercept column
/// is added internally) by maximizing the weighted log-likelihood with
/// damped Newton steps.
///
/// Convergence: gradient norm below 1e-6 within 100 iterations. Separation
/// is detected through coefficient divergence; the model is then returned
/// with `separated` set and coefficients clamped rather than silently huge.
pub fn fit_logistic(
    features: &DMatrix<f64>,
    labels: &[u8],
    weighting: ClassWeighting,
) -> Result<LogisticModel> {
    let n = features.nrows();
    let p = features.ncols();
    if n != labels.len() {
        return Err(Error::invalid(format!(
            "feature rows ({n}) and labels ({}) differ",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if n <= p + 1 {
        return Err(Error::invalid(format!(
            "need more observations ({n}) than coefficients ({})",
            p + 1
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    for j in 0..p {
        let col = features.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::invalid(format!(
                "feature column {j} is constant and duplicates the intercept"
            )));
        }
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::degenerate(
            "logistic fit undefined: labels contain a single class",
        ));
    }

    let w = observation_weights(labels, weighting)?;

    // Augmented design with the intercept in column 0.
    let mut x = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 0..p {
            x[(i, j + 1)] = features[(i, j)];
        }
    }

    let mut beta = DVector::zeros(p + 1);
    let mut eta = &x * &beta;
    let mut ll = weighted_loglik(&eta, labels, &w);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=MAX_ITER {
        iterations = iter;
        let probs: Vec<f64> = eta.iter().copied().map(sigmoid).collect();

        let mut grad = DVector::zeros(p + 1);
        for i in 0..n {
            let r = w[i] * (labels[i] as f64 - probs[i]);
            for j in 0..=p {
                grad[j] += r * x[(i, j)];
            }
        }
        grad_norm = grad.norm();
        if grad_norm < GRAD_TOL {
            converged = true;
            break;
        }

        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let wi = (w[i] * probs[i] * (1.0 - probs[i])).max(1e-12);
            for a in 0..=p {
                let xa = x[(i, a)] * wi;
                for b in a..=p {
                    hess[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }

        let step = solve_spd(&hess, &grad)?;

        // Halve the step until the weighted log-likelihood improves.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let eta_c = &x * &candidate;
            let ll_c = weighted_loglik(&eta_c, labels, &w);
            if ll_c > ll - 1e-14 {
                beta = candidate;
                eta = eta_c;
                ll = ll_c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        if beta.amax() > COEF_CAP * 10.0 {
            break;
        }
    }

    let separated = beta.amax() > COEF_CAP;
    if separated {
        converged = false;
        for v in beta.iter_mut() {
            *v = v.clamp(-COEF_CAP, COEF_CAP);
        }
    }

    let mut warnings = Vec::new();
    if separated {
        warnings.push(
            "separation detected: coefficients diverged and were capped".to_string(),
        );
    } else if !converged {
        warnings.push(format!(
            "did not reach gradient tolerance {GRAD_TOL} in {MAX_ITER} iterations \
             (final norm {grad_norm:.3e})"
        ));
    }

    let covariance = if separated {
        None
    } else {
        let probs: Vec<f64> = eta.iter().copied().map(sigmoid).collect();
        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let wi = w[i] * probs[i] * (1.0 - probs[i]);
            for a in 0..=p {
                let xa = x[(i, a)] * wi;
                for b in a..=p {
                    hess[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        hess.try_inverse().map(|inv| {
            (0..=p)
                .map(|a| (0..=p).map(|b| inv[(a, b)]).collect())
                .collect()
        })
    };

    Ok(LogisticModel {
        intercept: beta[0],
        weights: beta.as_slice()[1..].to_vec(),
        weighting,
        iterations,
        grad_norm,
        converged,
        separated,
        covariance,
        warnings,
    })
}

fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(g));
    }
    // Ridge fallback for near-singular information matrices.
    let p = h.nrows();
    let mut ridged = h.clone();
    for i in 0..p {
        ridged[(i, i)] += 1e-8 * (1.0 + h[(i, i)].abs());
    }
    ridged
        .cholesky()
        .map(|c| c.solve(g))
        .ok_or_else(|| Error::degenerate("information matrix is singular"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::util::rng_from;

    fn two_point_design() -> (DMatrix<f64>, Vec<u8>) {
        // x=0: 25% positive; x=1: 75% positive.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..100 {
            xs.push(0.0);
            ys.push(u8::from(i < 25));
        }
        for i in 0..100 {
            xs.push(1.0);
            ys.push(u8::from(i < 75));
        }
        (DMatrix::from_column_slice(200, 1, &xs), ys)
    }

    #[test]
    fn two_point_design_matches_closed_form() {
        // With a saturated 2-point design the MLE reproduces the empirical
        // log-odds exactly: intercept = logit(0.25), slope = logit(0.75) −
        // logit(0.25).
        let (x, y) = two_point_design();
        let model = fit_logistic(&x, &y, ClassWeighting::None).unwrap();
        let logit25 = (0.25f64 / 0.75).ln();
        let slope = (0.75f64 / 0.25).ln() - logit25;
        assert!(model.converged);
        assert!(model.grad_norm < 1e-6);
        assert!(
            (model.intercept - logit25).abs() / logit25.abs() < 0.02,
            "intercept {} vs {}",
            model.intercept,
            logit25
        );
        assert!(
            (model.weights[0] - slope).abs() / slope < 0.02,
            "slope {} vs {}",
            model.weights[0],
            slope
        );
    }

    #[test]
    fn null_slopes_have_small_z_scores() {
        let mut rng = rng_from(23);
        let mut all_small = 0;
        let seeds = 100;
        for _ in 0..seeds {
            let n = 1000;
            let x = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
            let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let model = fit_logistic(&x, &y, ClassWeighting::None).unwrap();
            let cov = model.covariance.as_ref().unwrap();
            let ok = (0..3).all(|j| {
                let se = cov[j + 1][j + 1].sqrt();
                (model.weights[j] / se).abs() < 3.0
            });
            if ok {
                all_small += 1;
            }
        }
        assert!(
            all_small >= 99,
            "only {all_small}/{seeds} null fits had all |z| < 3"
        );
    }

    #[test]
    fn balanced_data_makes_weighting_irrelevant() {
        let (x, y) = two_point_design();
        let plain = fit_logistic(&x, &y, ClassWeighting::None).unwrap();
        let weighted = fit_logistic(&x, &y, ClassWeighting::RareEvent).unwrap();
        assert!((plain.intercept - weighted.intercept).abs() < 1e-8);
        assert!((plain.weights[0] - weighted.weights[0]).abs() < 1e-8);
    }

    #[test]
    fn rare_event_weighting_balances_class_totals() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let w = observation_weights(&labels, ClassWeighting::RareEvent).unwrap();
        let pos_total: f64 = w.iter().zip(&labels).filter(|(_, &l)| l == 1).map(|(w, _)| w).sum();
        let neg_total: f64 = w.iter().zip(&labels).filter(|(_, &l)| l == 0).map(|(w, _)| w).sum();
        assert!((pos_total - 50.0).abs() < 1e-9);
        assert!((neg_total - 50.0).abs() < 1e-9);
    }

    #[test]
    fn prior_corrected_at_sample_prevalence_is_unweighted() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let w = observation_weights(
            &labels,
            ClassWeighting::PriorCorrected {
                target_prevalence: 0.1,
            },
        )
        .unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn separable_data_is_flagged_not_silently_divergent() {
        let n = 40;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / n as f64);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        let model = fit_logistic(&x, &y, ClassWeighting::None).unwrap();
        assert!(model.separated);
        assert!(!model.converged);
        assert!(model.weights[0].abs() <= COEF_CAP + 1e-9);
        assert!(!model.warnings.is_empty());
    }

    #[test]
    fn rejects_bad_shapes_and_constant_columns() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        let y = vec![0u8, 1, 0, 1];
        assert!(fit_logistic(&x, &y, ClassWeighting::None).is_err());

        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(fit_logistic(&x, &[0u8, 1], ClassWeighting::None).is_err());
    }

    #[test]
    fn single_class_labels_are_degenerate() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y = vec![1u8; 10];
        assert!(matches!(
            fit_logistic(&x, &y, ClassWeighting::None),
            Err(Error::Degenerate(_))
        ));
    }
}
