//! Poisson regression with a per-group random intercept, fitted by Laplace
//! approximation, plus the plain Poisson GLM used as its boundary case and
//! oracle.
//!
//! Model: y_ij ~ Poisson(mu_ij), log mu_ij = x_ij'beta + b_i with
//! b_i ~ Normal(0, sigma^2) per group i. Because the random effect enters
//! additively in the log link, each group's mode solves a scalar equation,
//! which keeps the Laplace objective cheap: one pass for the linear
//! predictors plus a scalar Newton solve per group.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng_from;
use rand::Rng;

/// Options for [`fit_poisson_glmm`].
#[derive(Debug, Clone)]
pub struct GlmmOptions {
    /// Outer quasi-Newton iteration cap.
    pub max_outer: usize,
    /// Fix the random-intercept standard deviation instead of estimating it.
    /// `Some(0.0)` reduces the model to a plain Poisson GLM but still fits
    /// it through the outer optimizer (useful as a cross-check against the
    /// IRLS path).
    pub fix_sigma: Option<f64>,
    /// Standardize feature columns to zero mean and unit variance before
    /// fitting. Coefficients and covariance are then reported on the
    /// standardized scale. Off by default: scores are left raw.
    pub standardize: bool,
    /// Starting value for sigma when it is estimated.
    pub init_sigma: f64,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        GlmmOptions {
            max_outer: 500,
            fix_sigma: None,
            standardize: false,
            init_sigma: 0.3,
        }
    }
}

/// A fitted Poisson GLMM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmmFit {
    /// Fixed effects, intercept first.
    pub beta: Vec<f64>,
    /// Random-intercept standard deviation (0 at the boundary).
    pub sigma: f64,
    /// Covariance of `beta` from the observed information at the optimum.
    pub covariance: Vec<Vec<f64>>,
    /// Laplace-approximated marginal log-likelihood at the optimum.
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when sigma collapsed to the boundary and the model was refitted
    /// as a plain Poisson GLM.
    pub sigma_boundary: bool,
    /// False when the grouping structure cannot identify sigma (fewer than
    /// two groups).
    pub sigma_identifiable: bool,
    /// Log-likelihood after every accepted outer step (nondecreasing).
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// A plain Poisson GLM fitted by damped Newton (IRLS).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonGlm {
    pub beta: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One row of a rate-ratio table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRatioRow {
    pub name: String,
    pub rate_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn validate_counts(outcome: &[f64]) -> Result<()> {
    for (i, &y) in outcome.iter().enumerate() {
        if !y.is_finite() || y < 0.0 || y.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "outcome at index {i} is {y}; expected a nonnegative integer count"
            )));
        }
    }
    Ok(())
}

fn design_with_intercept(features: &DMatrix<f64>) -> DMatrix<f64> {
    let n = features.nrows();
    let p = features.ncols();
    let mut x = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 0..p {
            x[(i, j + 1)] = features[(i, j)];
        }
    }
    x
}

fn poisson_loglik(eta: &DVector<f64>, y: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..y.len() {
        let e = eta[i];
        if e > 500.0 {
            return f64::NEG_INFINITY;
        }
        ll += y[i] * e - e.exp() - libm::lgamma(y[i] + 1.0);
    }
    ll
}

/// Plain Poisson GLM (log link) by damped Newton. The intercept column is
/// added internally; `beta[0]` is the intercept.
pub fn fit_poisson_glm(outcome: &[f64], features: &DMatrix<f64>) -> Result<PoissonGlm> {
    let n = features.nrows();
    let p = features.ncols();
    if n != outcome.len() {
        return Err(Error::invalid(format!(
            "feature rows ({n}) and outcomes ({}) differ",
            outcome.len()
        )));
    }
    if n <= p + 1 {
        return Err(Error::invalid(format!(
            "need more observations ({n}) than coefficients ({})",
            p + 1
        )));
    }
    validate_counts(outcome)?;
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    let total: f64 = outcome.iter().sum();
    if total == 0.0 {
        return Err(Error::degenerate(
            "poisson fit undefined: all outcome counts are zero",
        ));
    }

    // Center the covariates so the intercept column is orthogonal to them;
    // raw positive-valued features otherwise leave the Newton system too
    // ill-conditioned to drive the gradient to tolerance. The shift is
    // undone exactly before returning.
    let centers = column_means(features);
    let mut centered = features.clone();
    for j in 0..p {
        for i in 0..n {
            centered[(i, j)] -= centers[j];
        }
    }
    let x = design_with_intercept(&centered);
    let mut beta = DVector::zeros(p + 1);
    beta[0] = (total / n as f64).ln();

    let mut eta = &x * &beta;
    let mut ll = poisson_loglik(&eta, outcome);
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=100 {
        iterations = iter;
        let mu: Vec<f64> = eta.iter().map(|&e| e.min(500.0).exp()).collect();

        let mut grad = DVector::zeros(p + 1);
        for i in 0..n {
            let r = outcome[i] - mu[i];
            for j in 0..=p {
                grad[j] += r * x[(i, j)];
            }
        }
        if grad.norm() < 1e-8 {
            converged = true;
            break;
        }

        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            for a in 0..=p {
                let xa = x[(i, a)] * mu[i];
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

        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::degenerate("poisson information matrix is singular"))?;

        // Newton decrement: the optimality gap is about half of grad'step.
        // Unlike the absolute gradient norm above, this stays reachable
        // when strong curvature keeps the gradient floor high. The step
        // that triggers it is still taken, squaring the remaining error.
        let decrement_small = grad.dot(&step) < 1e-12 * (1.0 + ll.abs());

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let eta_c = &x * &cand;
            let ll_c = poisson_loglik(&eta_c, outcome);
            if ll_c > ll - 1e-14 && ll_c.is_finite() {
                beta = cand;
                eta = eta_c;
                ll = ll_c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if decrement_small || !accepted {
            converged = decrement_small;
            break;
        }
    }

    let mu: Vec<f64> = eta.iter().map(|&e| e.min(500.0).exp()).collect();
    let mut hess = DMatrix::zeros(p + 1, p + 1);
    for i in 0..n {
        for a in 0..=p {
            let xa = x[(i, a)] * mu[i];
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
    let cov = hess
        .try_inverse()
        .ok_or_else(|| Error::degenerate("poisson information matrix is singular"))?;

    let mut beta = beta.as_slice().to_vec();
    let mut covariance = matrix_to_rows(&cov);
    uncenter_fit(&mut beta, &mut covariance, &centers);
    Ok(PoissonGlm {
        beta,
        covariance,
        log_likelihood: ll,
        iterations,
        converged,
    })
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Column means, for centering covariates around zero during optimization.
fn column_means(features: &DMatrix<f64>) -> Vec<f64> {
    let n = features.nrows() as f64;
    (0..features.ncols())
        .map(|j| features.column(j).iter().sum::<f64>() / n)
        .collect()
}

/// Undo internal covariate centering. Centering is an exact linear
/// reparameterization: slopes are untouched, the intercept absorbs the
/// shift, and the covariance transforms by the same linear map.
fn uncenter_fit(beta: &mut [f64], covariance: &mut Vec<Vec<f64>>, centers: &[f64]) {
    let p = centers.len();
    beta[0] -= (0..p).map(|j| beta[j + 1] * centers[j]).sum::<f64>();
    let d = p + 1;
    let a = DMatrix::from_fn(d, d, |i, j| {
        if i == 0 && j > 0 {
            -centers[j - 1]
        } else {
            f64::from(u8::from(i == j))
        }
    });
    let c = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
    *covariance = matrix_to_rows(&(&a * c * a.transpose()));
}

/// Per-group sufficient statistics for the Laplace objective.
struct GroupData {
    /// Row indices of this group.
    rows: Vec<usize>,
    /// Sum of outcome counts.
    sum_y: f64,
}

/// The Laplace-approximated marginal log-likelihood.
///
/// For each group, the random-intercept mode solves
/// sum_y − e^b·E − b/sigma² = 0 where E = Σ_j exp(x_ij'beta); the group's
/// contribution is g(b̂) − ½·log(sigma²·e^b̂·E + 1).
fn laplace_loglik(
    theta: &[f64],
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[GroupData],
    fixed_sigma: Option<f64>,
    lgamma_sum: f64,
) -> f64 {
    let p1 = x.ncols();
    let beta = &theta[..p1];
    let sigma = fixed_sigma.unwrap_or_else(|| theta[p1].exp());

    let n = x.nrows();
    let mut eta = vec![0.0; n];
    for i in 0..n {
        let mut e = 0.0;
        for j in 0..p1 {
            e += x[(i, j)] * beta[j];
        }
        eta[i] = e;
    }

    let mut ll = -lgamma_sum;
    for g in groups {
        let mut sum_exp = 0.0;
        let mut sum_y_eta = 0.0;
        for &i in &g.rows {
            if eta[i] > 500.0 {
                return f64::NEG_INFINITY;
            }
            sum_exp += eta[i].exp();
            sum_y_eta += y[i] * eta[i];
        }
        if sigma == 0.0 {
            ll += sum_y_eta - sum_exp;
            continue;
        }

        // Scalar Newton for the mode of
        // g(b) = sum_y_eta + sum_y·b − e^b·sum_exp − b²/(2σ²).
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut b = 0.0f64;
        let g_of = |b: f64| sum_y_eta + g.sum_y * b - b.exp() * sum_exp - b * b * inv_s2 / 2.0;
        let mut gb = g_of(b);
        for _ in 0..100 {
            let grad = g.sum_y - b.exp() * sum_exp - b * inv_s2;
            if grad.abs() < 1e-11 * (1.0 + g.sum_y.abs()) {
                break;
            }
            let hess = -b.exp() * sum_exp - inv_s2;
            let mut step = -grad / hess;
            // Halve until the strictly concave objective improves.
            let mut improved = false;
            for _ in 0..60 {
                let cand = b + step;
                let gc = g_of(cand);
                if gc >= gb {
                    b = cand;
                    gb = gc;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let w_scaled = sigma * sigma * b.exp() * sum_exp + 1.0;
        ll += gb - 0.5 * w_scaled.ln();
    }
    ll
}

fn finite_diff_gradient(
    f: &mut impl FnMut(&[f64]) -> f64,
    theta: &[f64],
) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        let h = 1e-5 * theta[k].abs().max(1.0);
        probe[k] = theta[k] + h;
        let up = f(&probe);
        probe[k] = theta[k] - h;
        let down = f(&probe);
        probe[k] = theta[k];
        grad[k] = (up - down) / (2.0 * h);
    }
    grad
}

fn finite_diff_hessian(f: &mut impl FnMut(&[f64]) -> f64, theta: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let f0 = f(theta);
    let h: Vec<f64> = theta.iter().map(|t| 5e-4 * t.abs().max(1.0)).collect();
    let mut hess = DMatrix::zeros(d, d);
    let mut probe = theta.to_vec();
    for a in 0..d {
        probe[a] = theta[a] + h[a];
        let up = f(&probe);
        probe[a] = theta[a] - h[a];
        let down = f(&probe);
        probe[a] = theta[a];
        hess[(a, a)] = (up - 2.0 * f0 + down) / (h[a] * h[a]);
        for b in (a + 1)..d {
            probe[a] = theta[a] + h[a];
            probe[b] = theta[b] + h[b];
            let pp = f(&probe);
            probe[b] = theta[b] - h[b];
            let pm = f(&probe);
            probe[a] = theta[a] - h[a];
            let mm = f(&probe);
            probe[b] = theta[b] + h[b];
            let mp = f(&probe);
            probe[a] = theta[a];
            probe[b] = theta[b];
            let v = (pp - pm - mp + mm) / (4.0 * h[a] * h[b]);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    hess
}

/// Fit a Poisson GLMM with a per-group random intercept by maximizing the
/// Laplace-approximated marginal likelihood.
///
/// `outcome` holds nonnegative integer counts (binary outcomes are the 0/1
/// special case), `features` the fixed-effect columns without intercept, and
/// `groups` a group id per row. Sigma is optimized on the log scale; a
/// collapse to the boundary triggers a plain-GLM refit with sigma reported
/// as 0. A single group makes sigma unidentifiable: the fit degrades to the
/// plain GLM with a warning instead of failing.
pub fn fit_poisson_glmm(
    outcome: &[f64],
    features: &DMatrix<f64>,
    groups: &[usize],
    options: &GlmmOptions,
) -> Result<GlmmFit> {
    let n = features.nrows();
    let p = features.ncols();
    if n != outcome.len() || n != groups.len() {
        return Err(Error::invalid(format!(
            "rows mismatch: {} features, {} outcomes, {} groups",
            n,
            outcome.len(),
            groups.len()
        )));
    }
    validate_counts(outcome)?;
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    if let Some(s) = options.fix_sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::invalid(format!(
                "fixed sigma must be a nonnegative real, got {s}"
            )));
        }
    }

    let mut warnings = Vec::new();

    // Scale sanity: wildly different column scales make the shared
    // finite-difference steps unreliable.
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = features.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        sds.push(var.sqrt());
    }
    let max_sd = sds.iter().copied().fold(0.0f64, f64::max);
    let min_sd = sds.iter().copied().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    if min_sd.is_finite() && max_sd / min_sd > 100.0 {
        warnings.push(format!(
            "feature scales differ by more than 100x (sd range {min_sd:.3e}..{max_sd:.3e}); \
             consider standardizing"
        ));
    }

    // The optimizer always works on centered columns for conditioning.
    // Standardized fits stay on their scale (that is the requested output);
    // raw fits record the centers and are shifted back before returning.
    let means = column_means(features);
    let (work_features, centers) = if options.standardize {
        let mut f = features.clone();
        for j in 0..p {
            if sds[j] == 0.0 {
                return Err(Error::invalid(format!(
                    "cannot standardize constant feature column {j}"
                )));
            }
            for i in 0..n {
                f[(i, j)] = (features[(i, j)] - means[j]) / sds[j];
            }
        }
        warnings.push("coefficients reported on the standardized feature scale".to_string());
        (f, None)
    } else {
        let mut f = features.clone();
        for j in 0..p {
            for i in 0..n {
                f[(i, j)] -= means[j];
            }
        }
        (f, Some(means))
    };

    // Canonicalize group ids to 0..G.
    let mut id_map = std::collections::BTreeMap::new();
    for &g in groups {
        let next = id_map.len();
        id_map.entry(g).or_insert(next);
    }
    let n_groups = id_map.len();
    let mut group_data: Vec<GroupData> = (0..n_groups)
        .map(|_| GroupData {
            rows: Vec::new(),
            sum_y: 0.0,
        })
        .collect();
    for (i, &g) in groups.iter().enumerate() {
        let gi = id_map[&g];
        group_data[gi].rows.push(i);
        group_data[gi].sum_y += outcome[i];
    }

    let single_group = n_groups < 2;
    if single_group {
        warnings.push(
            "only one group present: random-intercept scale is unidentifiable; \
             reporting the plain Poisson GLM with sigma = 0"
                .to_string(),
        );
        let glm = fit_poisson_glm(outcome, &work_features)?;
        let mut beta = glm.beta.clone();
        let mut covariance = glm.covariance.clone();
        if let Some(c) = &centers {
            uncenter_fit(&mut beta, &mut covariance, c);
        }
        return Ok(GlmmFit {
            beta,
            sigma: 0.0,
            covariance,
            log_likelihood: glm.log_likelihood,
            converged: glm.converged,
            iterations: glm.iterations,
            sigma_boundary: false,
            sigma_identifiable: false,
            loglik_trace: vec![glm.log_likelihood],
            warnings,
        });
    }

    let x = design_with_intercept(&work_features);
    let lgamma_sum: f64 = outcome.iter().map(|&y| libm::lgamma(y + 1.0)).sum();

    // Initialize beta from the plain GLM; it is cheap and close.
    let glm_init = fit_poisson_glm(outcome, &work_features)?;

    let sigma_free = options.fix_sigma.is_none();
    let dim = if sigma_free { p + 2 } else { p + 1 };
    let mut theta = vec![0.0; dim];
    theta[..=p].copy_from_slice(&glm_init.beta);
    if sigma_free {
        theta[p + 1] = options.init_sigma.max(1e-3).ln();
    }

    let fixed_sigma = options.fix_sigma;
    let mut eval = |t: &[f64]| -> f64 {
        laplace_loglik(t, &x, outcome, &group_data, fixed_sigma, lgamma_sum)
    };

    // Quasi-Newton (BFGS on the negative log-likelihood) with finite
    // difference gradients and an Armijo backtracking line search.
    let mut ll = eval(&theta);
    if !ll.is_finite() {
        return Err(Error::degenerate(
            "laplace objective not finite at the starting point",
        ));
    }
    let mut trace = vec![ll];
    let mut grad = finite_diff_gradient(&mut eval, &theta);
    let mut h_inv = DMatrix::identity(dim, dim);
    let mut converged = false;
    let mut iterations = 0;
    let mut small_steps = 0;

    for iter in 1..=options.max_outer {
        iterations = iter;
        let grad_inf = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if grad_inf < 1e-5 {
            converged = true;
            break;
        }

        let g_vec = DVector::from_column_slice(&grad);
        let mut direction = &h_inv * &g_vec; // ascent direction
        let mut slope: f64 = direction.dot(&g_vec);
        if slope <= 0.0 {
            // Curvature went bad; restart from steepest ascent.
            h_inv = DMatrix::identity(dim, dim);
            direction = g_vec.clone();
            slope = direction.dot(&g_vec);
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        let mut new_theta = theta.clone();
        let mut new_ll = ll;
        for _ in 0..40 {
            for k in 0..dim {
                new_theta[k] = theta[k] + alpha * direction[k];
            }
            let cand = eval(&new_theta);
            if cand.is_finite() && cand >= ll + 1e-4 * alpha * slope {
                new_ll = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No improvement beyond noise; treat as converged at tolerance.
            converged = grad_inf < 1e-2;
            break;
        }

        let new_grad = finite_diff_gradient(&mut eval, &new_theta);
        let s = DVector::from_fn(dim, |k, _| new_theta[k] - theta[k]);
        let yv = DVector::from_fn(dim, |k, _| grad[k] - new_grad[k]); // = -(Δ gradient of -ll)
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            // Standard BFGS inverse update on the minimization problem.
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // H <- (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let s_m = &s * s.transpose();
            let hy_s = &hy * s.transpose();
            h_inv = &h_inv - (&hy_s + hy_s.transpose()) * rho + &s_m * (rho * rho * yhy + rho);
        }

        if (new_ll - ll).abs() < 1e-11 * (1.0 + ll.abs()) {
            small_steps += 1;
            if small_steps >= 2 {
                theta = new_theta;
                ll = new_ll;
                trace.push(ll);
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }

        theta = new_theta;
        grad = new_grad;
        ll = new_ll;
        trace.push(ll);
    }

    if !converged {
        warnings.push(format!(
            "outer optimization did not converge in {} iterations",
            options.max_outer
        ));
    }

    let sigma = fixed_sigma.unwrap_or_else(|| theta[p + 1].exp());

    // Sigma collapsing to the boundary: the Laplace objective is flat in
    // log-sigma there, so report the plain GLM instead.
    if sigma_free && sigma < 1e-3 {
        warnings.push(
            "sigma collapsed to the boundary; refitted as a plain Poisson GLM with sigma = 0"
                .to_string(),
        );
        let glm = fit_poisson_glm(outcome, &work_features)?;
        let mut beta = glm.beta.clone();
        let mut covariance = glm.covariance.clone();
        if let Some(c) = &centers {
            uncenter_fit(&mut beta, &mut covariance, c);
        }
        return Ok(GlmmFit {
            beta,
            sigma: 0.0,
            covariance,
            log_likelihood: glm.log_likelihood,
            converged: glm.converged,
            iterations,
            sigma_boundary: true,
            sigma_identifiable: true,
            loglik_trace: trace,
            warnings,
        });
    }

    // Covariance of beta from the finite-difference observed information
    // over all free parameters.
    let hess = finite_diff_hessian(&mut eval, &theta);
    let info = -hess;
    let beta_cov = info
        .clone()
        .try_inverse()
        .map(|full| full.view((0, 0), (p + 1, p + 1)).into_owned())
        .or_else(|| {
            // Fall back to the beta block with sigma held at its estimate.
            let mut beta_eval = |b: &[f64]| -> f64 {
                let mut t = theta.clone();
                t[..=p].copy_from_slice(b);
                eval(&t)
            };
            let hb = finite_diff_hessian(&mut beta_eval, &theta[..=p].to_vec());
            (-hb).try_inverse()
        })
        .ok_or_else(|| {
            Error::degenerate("observed information is singular at the optimum")
        })?;

    let mut beta = theta[..=p].to_vec();
    let mut covariance = matrix_to_rows(&beta_cov);
    if let Some(c) = &centers {
        uncenter_fit(&mut beta, &mut covariance, c);
    }
    Ok(GlmmFit {
        beta,
        sigma,
        covariance,
        log_likelihood: ll,
        converged,
        iterations,
        sigma_boundary: false,
        sigma_identifiable: true,
        loglik_trace: trace,
        warnings,
    })
}

/// Exponentiated fixed effects with 95% Wald intervals, one row per
/// non-intercept coefficient. Requires a converged fit.
pub fn rate_ratio_table(fit: &GlmmFit, names: &[String]) -> Result<Vec<RateRatioRow>> {
    if !fit.converged {
        return Err(Error::invalid(
            "rate ratios require a converged fit; this fit is flagged nonconverged",
        ));
    }
    let p = fit.beta.len() - 1;
    if names.len() != p {
        return Err(Error::invalid(format!(
            "expected {p} names for {p} slopes, got {}",
            names.len()
        )));
    }
    let mut rows = Vec::with_capacity(p);
    for k in 1..=p {
        let b = fit.beta[k];
        let var = fit.covariance[k][k];
        if var < 0.0 {
            return Err(Error::degenerate(format!(
                "negative variance for coefficient {k}"
            )));
        }
        let se = var.sqrt();
        rows.push(RateRatioRow {
            name: names[k - 1].clone(),
            rate_ratio: b.exp(),
            ci_low: (b - 1.96 * se).exp(),
            ci_high: (b + 1.96 * se).exp(),
        });
    }
    Ok(rows)
}

/// Synthetic data drawn from the model itself: per-group random intercepts
/// Normal(0, sigma²), feature scores uniform on {1..5}, Poisson outcomes.
#[derive(Debug, Clone)]
pub struct GlmmSimulation {
    pub outcome: Vec<f64>,
    pub features: DMatrix<f64>,
    pub groups: Vec<usize>,
}

pub fn simulate_poisson_glmm(
    beta: &[f64],
    sigma: f64,
    n_groups: usize,
    per_group: usize,
    seed: u64,
) -> Result<GlmmSimulation> {
    if beta.is_empty() {
        return Err(Error::invalid("beta must contain at least an intercept"));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be a nonnegative real"));
    }
    if n_groups == 0 || per_group == 0 {
        return Err(Error::invalid("n_groups and per_group must be positive"));
    }
    let p = beta.len() - 1;
    let n = n_groups * per_group;
    let mut rng = rng_from(seed);

    let mut features = DMatrix::zeros(n, p);
    let mut outcome = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut row = 0;
    for g in 0..n_groups {
        let b_g = sigma * standard_normal(&mut rng);
        for _ in 0..per_group {
            let mut eta = beta[0] + b_g;
            for j in 0..p {
                let score = rng.gen_range(1..=5) as f64;
                features[(row, j)] = score;
                eta += beta[j + 1] * score;
            }
            let mu = eta.exp();
            if !mu.is_finite() || mu > 1e6 {
                return Err(Error::invalid(format!(
                    "simulated rate {mu} is out of range; check beta and sigma"
                )));
            }
            outcome.push(sample_poisson(mu, &mut rng) as f64);
            groups.push(g);
            row += 1;
        }
    }
    Ok(GlmmSimulation {
        outcome,
        features,
        groups,
    })
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one value per pair of uniforms is plenty here.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Exact Poisson sampling: Knuth's product method, with large means split
/// into chunks (a Poisson sum of independent Poissons) to avoid underflow.
fn sample_poisson(mu: f64, rng: &mut impl Rng) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    if mu > 30.0 {
        let half = mu / 2.0;
        return sample_poisson(half, rng) + sample_poisson(mu - half, rng);
    }
    let limit = (-mu).exp();
    let mut product: f64 = rng.gen_range(0.0..1.0);
    let mut count = 0u64;
    while product > limit {
        count += 1;
        product *= rng.gen_range(0.0..1.0);
    }
    count
}
