//! The occurrence/magnitude mixture with size-dependent detection.
//!
//! A response `Y` is zero with probability `1 - σ(xᵀθ)` and otherwise
//! exponential with mean `e^{xᵀβ}`. An event of size `y` is recorded with
//! probability `Γ(y) = 1 - e^{-λ y}`; unrecorded events show up as `z = 0`.
//! Integrating `Γ` against the exponential density gives the marginal
//! detection probability `φ = λ / (λ + e^{-xᵀβ}) = σ(xᵀβ + log λ)`.
//!
//! The per-sample log-likelihood used here is
//!
//! ```text
//! z = 0:  log(1 - φ(x; β) σ(xᵀθ))
//! z > 0:  log g(z | x; β) + log σ(xᵀθ)
//! ```
//!
//! The `log Γ(z)` factor of the full observed-data density is dropped. It is
//! constant in `(β, θ)` for a fixed `λ`, so values of the loss are not
//! comparable across different detection rates. Selection over `λ` is done on
//! a Brier score instead (see [`crate::selection`]).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ObservedSample};
use crate::error::{check_dims, Error, Result};

/// Stacked parameter `ω = (β, θ)`: magnitude and occurrence coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPair {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ParamPair {
    pub fn new(beta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidInput(
                "parameter dimension must be at least 1".into(),
            ));
        }
        check_dims(beta.len(), theta.len())?;
        if beta.iter().chain(&theta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameters",
                sample: None,
            });
        }
        Ok(Self { beta, theta })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            theta: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// `[β; θ]` as one vector of length `2p`.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(2 * self.p());
        w.extend_from_slice(&self.beta);
        w.extend_from_slice(&self.theta);
        w
    }

    pub fn from_stacked(w: &[f64]) -> Result<Self> {
        if w.is_empty() || !w.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "stacked parameter length must be even and positive, got {}",
                w.len()
            )));
        }
        let p = w.len() / 2;
        Self::new(w[..p].to_vec(), w[p..].to_vec())
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.to_stacked())
    }
}

/// Detection rate `λ_ε > 0` of `Γ(y) = 1 - e^{-λ y}`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DetectionParam(f64);

impl DetectionParam {
    pub fn new(lambda_eps: f64) -> Result<Self> {
        if lambda_eps.is_finite() && lambda_eps > 0.0 {
            Ok(Self(lambda_eps))
        } else {
            Err(Error::InvalidInput(format!(
                "detection rate must be positive and finite, got {lambda_eps}"
            )))
        }
    }

    pub fn lambda(self) -> f64 {
        self.0
    }

    pub fn log_lambda(self) -> f64 {
        self.0.ln()
    }
}

impl TryFrom<f64> for DetectionParam {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DetectionParam> for f64 {
    fn from(d: DetectionParam) -> f64 {
        d.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn checked_dot(x: &[f64], coef: &[f64]) -> Result<f64> {
    check_dims(coef.len(), x.len())?;
    Ok(dot(x, coef))
}

/// Logistic function, accurate in both tails.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `log σ(t)`.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

/// `log(e^a + e^b + e^c)`.
#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// `p₁(x; θ) = σ(xᵀθ)`.
pub fn occurrence_prob(x: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(sigmoid(checked_dot(x, theta)?))
}

/// Exponential density with rate `e^{-xᵀβ}` evaluated at `t > 0`.
pub fn magnitude_density(t: f64, x: &[f64], beta: &[f64]) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "magnitude must be positive, got {t}"
        )));
    }
    let rate = (-checked_dot(x, beta)?).exp();
    Ok(rate * (-rate * t).exp())
}

/// `Γ(y) = 1 - e^{-λ y}`.
pub fn detection_prob(y: f64, d: DetectionParam) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "size must be non-negative, got {y}"
        )));
    }
    Ok(-(-d.lambda() * y).exp_m1())
}

/// Marginal detection probability `φ = σ(xᵀβ + log λ)`.
pub fn phi(x: &[f64], beta: &[f64], d: DetectionParam) -> Result<f64> {
    Ok(sigmoid(checked_dot(x, beta)? + d.log_lambda()))
}

/// `h(a, b) = logit(σ(a)σ(b))`.
pub fn mixture_link(a: f64, b: f64) -> f64 {
    -log_sum_exp3(-a, -b, -a - b)
}

/// Partial derivatives `(∂h/∂a, ∂h/∂b)` of [`mixture_link`].
///
/// With `m = max(-a, -b, -a-b)` and weights `w_a = e^{-a-m}` etc.,
/// `h₁ = (w_a + w_ab)/Σw` and `h₂ = (w_b + w_ab)/Σw`.
pub fn mixture_link_partials(a: f64, b: f64) -> (f64, f64) {
    let (na, nb, nab) = (-a, -b, -a - b);
    let m = na.max(nb).max(nab);
    let wa = (na - m).exp();
    let wb = (nb - m).exp();
    let wab = (nab - m).exp();
    let total = wa + wb + wab;
    ((wa + wab) / total, (wb + wab) / total)
}

/// `(σ(t), σ(-t), log(1 + e^{-|t|}))` from one exponential.
#[inline]
fn sigmoid_parts(t: f64) -> (f64, f64, f64) {
    let e = (-t.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e * big;
    let tail = e.ln_1p();
    if t >= 0.0 {
        (big, small, tail)
    } else {
        (small, big, tail)
    }
}

/// Per-sample log-likelihood and its derivatives with respect to `xᵀβ` and `xᵀθ`.
///
/// A recorded event contributes `log g(z) + log σ(xᵀθ)`, whose `β`-derivative
/// is `e^{-xᵀβ} z - 1`. A zero contributes `log(1 - q)` with `q = σ(a)σ(b)`,
/// `a = xᵀβ + log λ`, `b = xᵀθ`, and `1 - q = σ(-a) + σ(a)σ(-b)` keeps full
/// relative precision at both ends.
#[inline]
fn sample_terms(xb: f64, xt: f64, z: f64, log_lambda: f64) -> (f64, f64, f64) {
    let (sb, sb_neg, tail_b) = sigmoid_parts(xt);
    if z > 0.0 {
        let scaled = (-xb).exp() * z;
        let log_sb = -(-xt).max(0.0) - tail_b;
        (-xb - scaled + log_sb, scaled - 1.0, sb_neg)
    } else {
        let (sa, sa_neg, _) = sigmoid_parts(xb + log_lambda);
        let q = sa * sb;
        let one_minus_q = sa_neg + sa * sb_neg;
        let r = q / one_minus_q;
        (one_minus_q.ln(), -r * sa_neg, -r * sb_neg)
    }
}

#[inline]
fn sample_log_lik(xb: f64, xt: f64, z: f64, log_lambda: f64) -> f64 {
    sample_terms(xb, xt, z, log_lambda).0
}

/// Per-sample log-likelihood `ℓ(ω; (x, z))` (not negated).
pub fn per_sample_loss(omega: &ParamPair, s: ObservedSample<'_>, d: DetectionParam) -> Result<f64> {
    if !(s.z >= 0.0 && s.z.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "observed size must be >= 0, got {}",
            s.z
        )));
    }
    let xb = checked_dot(s.x, &omega.beta)?;
    let xt = checked_dot(s.x, &omega.theta)?;
    let v = sample_log_lik(xb, xt, s.z, d.log_lambda());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: "per-sample log-likelihood",
            sample: None,
        })
    }
}

fn check_data(w: &[f64], data: &Dataset) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dims(2 * data.p(), w.len())?;
    Ok(data.p())
}

/// `L_n` at a stacked parameter vector `[β; θ]`.
pub fn neg_log_likelihood_stacked(w: &[f64], data: &Dataset, d: DetectionParam) -> Result<f64> {
    let p = check_data(w, data)?;
    let (beta, theta) = w.split_at(p);
    let log_lambda = d.log_lambda();
    let mut total = 0.0;
    for (i, s) in data.samples().enumerate() {
        let v = sample_log_lik(dot(s.x, beta), dot(s.x, theta), s.z, log_lambda);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "log-likelihood",
                sample: Some(i),
            });
        }
        total += v;
    }
    Ok(-total / data.n() as f64)
}

/// `L_n(ω) = -(1/n) Σ ℓ(ω; (x_i, z_i))`, summed in row order.
pub fn neg_log_likelihood(omega: &ParamPair, data: &Dataset, d: DetectionParam) -> Result<f64> {
    neg_log_likelihood_stacked(&omega.to_stacked(), data, d)
}

/// `L_n` and `∇L_n` at a stacked parameter vector, in one pass over the data.
pub fn loss_and_gradient_stacked(
    w: &[f64],
    data: &Dataset,
    d: DetectionParam,
) -> Result<(f64, Vec<f64>)> {
    let p = check_data(w, data)?;
    let (beta, theta) = w.split_at(p);
    let log_lambda = d.log_lambda();
    let mut total = 0.0;
    let mut grad = vec![0.0; 2 * p];
    for (i, s) in data.samples().enumerate() {
        let xb = dot(s.x, beta);
        let xt = dot(s.x, theta);
        let (value, coef_beta, coef_theta) = sample_terms(xb, xt, s.z, log_lambda);
        if !(value.is_finite() && coef_beta.is_finite() && coef_theta.is_finite()) {
            return Err(Error::NonFinite {
                context: "log-likelihood gradient",
                sample: Some(i),
            });
        }
        total += value;
        let (gb, gt) = grad.split_at_mut(p);
        for ((xj, gbj), gtj) in s.x.iter().zip(gb.iter_mut()).zip(gt.iter_mut()) {
            *gbj += coef_beta * xj;
            *gtj += coef_theta * xj;
        }
    }
    let scale = -1.0 / data.n() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// `∇L_n(ω)` stacked as `[∂/∂β; ∂/∂θ]`.
pub fn gradient(omega: &ParamPair, data: &Dataset, d: DetectionParam) -> Result<Vec<f64>> {
    loss_and_gradient_stacked(&omega.to_stacked(), data, d).map(|(_, g)| g)
}

/// Probability that a row shows `z > 0`: `φ(x; β, λ) σ(xᵀθ)`.
pub fn observed_occurrence_prob(
    omega: &ParamPair,
    lambda: DetectionParam,
    x: &[f64],
) -> Result<f64> {
    Ok(phi(x, &omega.beta, lambda)? * occurrence_prob(x, &omega.theta)?)
}
