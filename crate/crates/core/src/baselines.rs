//! Two-part comparison models: a logistic occurrence model plus a separate
//! log-link size model (exponential, Gamma or log-normal).
//!
//! Features are passed row-major with an explicit column count `p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::model::{dot, l2_norm, sigmoid, softplus};

const NEWTON_MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// Shape reported when the size residuals carry no dispersion information.
pub const SHAPE_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeFamily {
    Exponential,
    Gamma,
    LogNormal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// Occurrence labels are (quasi-)separable; coefficients were clamped.
    pub separated: bool,
    /// The size fit was not identified (too few positives or rank-deficient design).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPartModel {
    pub occurrence_coef: Vec<f64>,
    pub magnitude_coef: Vec<f64>,
    pub magnitude_family: MagnitudeFamily,
    /// Gamma shape or log-normal log-variance.
    pub aux: Option<f64>,
    #[serde(default)]
    pub flags: FitFlags,
}

impl TwoPartModel {
    pub fn p(&self) -> usize {
        self.occurrence_coef.len()
    }

    pub fn occurrence_prob(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.p(), x.len())?;
        Ok(sigmoid(dot(x, &self.occurrence_coef)))
    }

    /// Mean size given occurrence under the fitted family.
    pub fn magnitude_mean(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.p(), x.len())?;
        let eta = dot(x, &self.magnitude_coef);
        Ok(match self.magnitude_family {
            MagnitudeFamily::Exponential | MagnitudeFamily::Gamma => eta.exp(),
            MagnitudeFamily::LogNormal => (eta + 0.5 * self.aux.unwrap_or(0.0)).exp(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub separated: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaFit {
    pub coef: Vec<f64>,
    pub shape: f64,
    pub iterations: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalFit {
    pub coef: Vec<f64>,
    pub logvar: f64,
    pub rank_deficient: bool,
}

fn validate_design(x: &[f64], p: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if p == 0 {
        return Err(Error::InvalidInput(
            "feature dimension must be at least 1".into(),
        ));
    }
    check_dims(n * p, x.len())
}

fn validate_sizes(sizes: &[f64]) -> Result<()> {
    match sizes.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "size at row {i} must be positive, got {}",
            sizes[i]
        ))),
        None => Ok(()),
    }
}

/// `(1/n) Σ w_i x_i x_iᵀ`.
fn weighted_gram(x: &[f64], p: usize, weights: &[f64]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(p, p);
    for (row, &w) in x.chunks_exact(p).zip(weights) {
        for i in 0..p {
            let wi = w * row[i];
            for j in 0..=i {
                h[(i, j)] += wi * row[j];
            }
        }
    }
    let n = weights.len() as f64;
    for i in 0..p {
        for j in 0..=i {
            let v = h[(i, j)] / n;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// `(1/n) Σ c_i x_i`.
fn weighted_sum(x: &[f64], p: usize, coefs: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p];
    for (row, &c) in x.chunks_exact(p).zip(coefs) {
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += c * xj;
        }
    }
    let n = coefs.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

fn linear_predictor(x: &[f64], p: usize, coef: &[f64]) -> Vec<f64> {
    x.chunks_exact(p).map(|row| dot(row, coef)).collect()
}

fn rank_tolerance(sv: &DVector<f64>, dim: usize) -> f64 {
    sv.max() * dim as f64 * f64::EPSILON * 16.0
}

/// Solves `A d = b` for symmetric PSD `A`, falling back to the minimum-norm
/// solution; the flag reports rank deficiency.
fn solve_psd(a: &DMatrix<f64>, b: &[f64]) -> Result<(Vec<f64>, bool)> {
    let rhs = DVector::from_column_slice(b);
    let svd = a.clone().svd(true, true);
    let tol = rank_tolerance(&svd.singular_values, a.nrows());
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let sol = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    Ok((sol.iter().copied().collect(), rank < a.nrows()))
}

/// Minimum-norm least squares `argmin ‖X b - t‖₂`; flag reports rank deficiency.
fn least_squares(x: &[f64], p: usize, target: &[f64]) -> Result<(Vec<f64>, bool)> {
    let n = target.len();
    let xm = DMatrix::from_row_slice(n, p, x);
    let svd = xm.svd(true, true);
    let tol = rank_tolerance(&svd.singular_values, n.max(p));
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let sol = svd
        .solve(&DVector::from_column_slice(target), tol)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    Ok((sol.iter().copied().collect(), rank < p))
}

fn logistic_objective(x: &[f64], p: usize, y: &[f64], coef: &[f64]) -> f64 {
    x.chunks_exact(p)
        .zip(y)
        .map(|(row, yi)| {
            let eta = dot(row, coef);
            softplus(eta) - yi * eta
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Logistic regression MLE by damped Newton.
///
/// Coefficients are confined to `‖θ‖₂ ≤ 5√p`; reaching that bound means the
/// labels are separable and the fit is returned clamped with `separated` set.
pub fn fit_logistic(x: &[f64], p: usize, labels: &[bool]) -> Result<LogisticFit> {
    let n = labels.len();
    validate_design(x, p, n)?;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let clamp = 5.0 * (p as f64).sqrt();
    let mut coef = vec![0.0; p];
    let mut separated = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < NEWTON_MAX_ITER {
        let eta = linear_predictor(x, p, &coef);
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = mu.iter().zip(&y).map(|(m, yi)| m - yi).collect();
        let grad = weighted_sum(x, p, &resid);
        grad_norm = l2_norm(&grad);
        if grad_norm <= GRAD_TOL {
            break;
        }
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let hess = weighted_gram(x, p, &w);
        let dir = match hess.cholesky() {
            Some(ch) => ch
                .solve(&DVector::from_column_slice(&grad))
                .iter()
                .copied()
                .collect(),
            None => grad.clone(),
        };
        let slope = dot(&grad, &dir);
        let f0 = logistic_objective(x, p, &y, &coef);
        let mut t = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = coef.iter().zip(&dir).map(|(c, d)| c - t * d).collect();
            if logistic_objective(x, p, &y, &next) <= f0 - 1e-4 * t * slope || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        coef = next;
        let norm = l2_norm(&coef);
        if norm > clamp {
            coef.iter_mut().for_each(|c| *c *= clamp / norm);
            separated = true;
            break;
        }
    }

    Ok(LogisticFit {
        coef,
        separated,
        iterations,
        grad_norm,
    })
}

fn exponential_objective(x: &[f64], p: usize, sizes: &[f64], coef: &[f64]) -> f64 {
    x.chunks_exact(p)
        .zip(sizes)
        .map(|(row, s)| {
            let eta = dot(row, coef);
            (-eta).exp() * s + eta
        })
        .sum::<f64>()
        / sizes.len() as f64
}

fn exponential_score(x: &[f64], p: usize, sizes: &[f64], coef: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let scaled: Vec<f64> = x
        .chunks_exact(p)
        .zip(sizes)
        .map(|(row, s)| (-dot(row, coef)).exp() * s)
        .collect();
    let resid: Vec<f64> = scaled.iter().map(|v| 1.0 - v).collect();
    (weighted_sum(x, p, &resid), scaled)
}

/// Starting point for the log-link size fits: least squares of `log y`.
fn log_ls_start(x: &[f64], p: usize, sizes: &[f64]) -> Result<(Vec<f64>, bool)> {
    let logs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    least_squares(x, p, &logs)
}

/// MLE of `β` for `y ~ Exp(rate e^{-xᵀβ})` by damped Newton.
pub fn fit_exponential_glm(x: &[f64], p: usize, sizes: &[f64]) -> Result<GlmFit> {
    let n = sizes.len();
    validate_design(x, p, n)?;
    validate_sizes(sizes)?;
    let (mut coef, mut degenerate) = log_ls_start(x, p, sizes)?;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < NEWTON_MAX_ITER {
        let (grad, scaled) = exponential_score(x, p, sizes, &coef);
        grad_norm = l2_norm(&grad);
        if grad_norm <= GRAD_TOL {
            break;
        }
        let hess = weighted_gram(x, p, &scaled);
        let (dir, deficient) = solve_psd(&hess, &grad)?;
        degenerate |= deficient;
        let slope = dot(&grad, &dir);
        let f0 = exponential_objective(x, p, sizes, &coef);
        let mut t = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = coef.iter().zip(&dir).map(|(c, d)| c - t * d).collect();
            let f1 = exponential_objective(x, p, sizes, &next);
            if (f1.is_finite() && f1 <= f0 - 1e-4 * t * slope) || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if t < 1e-10 {
            break;
        }
        coef = next;
    }

    Ok(GlmFit {
        coef,
        iterations,
        grad_norm,
        degenerate,
    })
}

/// Trigamma `ψ'(x)` for `x > 0`: recurrence up to 6, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// Solves `log k - ψ(k) = d` for the Gamma shape `k`, `d > 0`.
fn gamma_shape(d: f64) -> f64 {
    let mut k = (3.0 - d + ((d - 3.0).powi(2) + 24.0 * d).sqrt()) / (12.0 * d);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - d;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) {
            next = 0.5 * k;
        }
        let done = (next - k).abs() <= 1e-8 * k;
        k = next;
        if done {
            break;
        }
    }
    k
}

/// Log-link Gamma regression.
///
/// The mean model is fitted by IRLS (Fisher scoring; with the log link all
/// working weights are one) and the shape by solving the profile score
/// `log k - ψ(k) = -(1/n) Σ (1 + log(y/μ) - y/μ)`.
pub fn fit_gamma_glm(x: &[f64], p: usize, sizes: &[f64]) -> Result<GammaFit> {
    let n = sizes.len();
    validate_design(x, p, n)?;
    validate_sizes(sizes)?;
    let (mut coef, mut degenerate) = log_ls_start(x, p, sizes)?;
    let gram = weighted_gram(x, p, &vec![1.0; n]);
    let mut iterations = 0;

    while iterations < NEWTON_MAX_ITER {
        let (grad, _) = exponential_score(x, p, sizes, &coef);
        if l2_norm(&grad) <= GRAD_TOL {
            break;
        }
        // IRLS update β⁺ = (XᵀX)⁻¹Xᵀ(η + (y - μ)/μ), written as a step from β.
        let (dir, deficient) = solve_psd(&gram, &grad)?;
        degenerate |= deficient;
        let f0 = exponential_objective(x, p, sizes, &coef);
        let mut t = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = coef.iter().zip(&dir).map(|(c, d)| c - t * d).collect();
            let f1 = exponential_objective(x, p, sizes, &next);
            if (f1.is_finite() && f1 <= f0) || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if t < 1e-10 {
            break;
        }
        coef = next;
    }

    let dispersion_stat = -x
        .chunks_exact(p)
        .zip(sizes)
        .map(|(row, s)| {
            let ratio = s * (-dot(row, &coef)).exp();
            1.0 + ratio.ln() - ratio
        })
        .sum::<f64>()
        / n as f64;
    let shape = if dispersion_stat > 1e-12 {
        gamma_shape(dispersion_stat).min(SHAPE_CAP)
    } else {
        degenerate = true;
        SHAPE_CAP
    };

    Ok(GammaFit {
        coef,
        shape,
        iterations,
        degenerate,
    })
}

/// Least squares of `log y` on the features; `logvar` is the residual MLE variance.
pub fn fit_lognormal(x: &[f64], p: usize, sizes: &[f64]) -> Result<LogNormalFit> {
    let n = sizes.len();
    validate_design(x, p, n)?;
    validate_sizes(sizes)?;
    let logs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let (coef, rank_deficient) = least_squares(x, p, &logs)?;
    let rss: f64 = x
        .chunks_exact(p)
        .zip(&logs)
        .map(|(row, l)| (l - dot(row, &coef)).powi(2))
        .sum();
    Ok(LogNormalFit {
        coef,
        logvar: rss / n as f64,
        rank_deficient,
    })
}

fn positive_rows(data: &Dataset, sizes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut s = Vec::new();
    for (row, &v) in data.rows().zip(sizes) {
        if v > 0.0 {
            x.extend_from_slice(row);
            s.push(v);
        }
    }
    (x, s)
}

fn fit_size_model(
    x: &[f64],
    p: usize,
    sizes: &[f64],
    family: MagnitudeFamily,
) -> Result<(Vec<f64>, Option<f64>, bool)> {
    let few = sizes.len() < p + 1;
    Ok(match family {
        MagnitudeFamily::Exponential => {
            let f = fit_exponential_glm(x, p, sizes)?;
            (f.coef, None, f.degenerate || few)
        }
        MagnitudeFamily::Gamma => {
            let f = fit_gamma_glm(x, p, sizes)?;
            (f.coef, Some(f.shape), f.degenerate || few)
        }
        MagnitudeFamily::LogNormal => {
            let f = fit_lognormal(x, p, sizes)?;
            (f.coef, Some(f.logvar), f.rank_deficient || few)
        }
    })
}

/// Oracle two-part fit on the latent responses: logistic on `1{y > 0}` and an
/// exponential GLM on the positive `y`.
pub fn fit_oracle(train: &Dataset) -> Result<TwoPartModel> {
    let latent = train.latent().ok_or(Error::MissingLatent)?;
    let occ = fit_logistic(train.features(), train.p(), &latent.u)?;
    let (x, sizes) = positive_rows(train, &latent.y);
    if sizes.is_empty() {
        return Err(Error::NoPositives);
    }
    let (coef, aux, degenerate) =
        fit_size_model(&x, train.p(), &sizes, MagnitudeFamily::Exponential)?;
    Ok(TwoPartModel {
        occurrence_coef: occ.coef,
        magnitude_coef: coef,
        magnitude_family: MagnitudeFamily::Exponential,
        aux,
        flags: FitFlags {
            separated: occ.separated,
            degenerate,
        },
    })
}

/// Naive two-part fit on the observed data: logistic on `1{z > 0}` and the
/// size family on the positive `z`. Latent columns are never read.
pub fn fit_observed_mixture(train: &Dataset, family: MagnitudeFamily) -> Result<TwoPartModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let occ = fit_logistic(train.features(), train.p(), &train.observed_labels())?;
    let (x, sizes) = positive_rows(train, train.z());
    if sizes.is_empty() {
        return Err(Error::NoPositives);
    }
    let (coef, aux, degenerate) = fit_size_model(&x, train.p(), &sizes, family)?;
    Ok(TwoPartModel {
        occurrence_coef: occ.coef,
        magnitude_coef: coef,
        magnitude_family: family,
        aux,
        flags: FitFlags {
            separated: occ.separated,
            degenerate,
        },
    })
}
