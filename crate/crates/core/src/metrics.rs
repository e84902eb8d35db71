//! Estimation and prediction scores.

use serde::{Deserialize, Serialize};

use crate::baselines::TwoPartModel;
use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::selection::PuOmmModel;

/// `‖est - truth‖₂` (not divided by `√p`).
pub fn rmse_params(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_dims(truth.len(), est.len())?;
    Ok(est
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

fn check_probs(labels: &[bool], probs: &[f64]) -> Result<()> {
    check_dims(labels.len(), probs.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match probs.iter().position(|q| !(0.0..=1.0).contains(q)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "probability at {i} outside [0, 1]: {}",
            probs[i]
        ))),
        None => Ok(()),
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn brier(labels: &[bool], probs: &[f64]) -> Result<f64> {
    check_probs(labels, probs)?;
    Ok(labels
        .iter()
        .zip(probs)
        .map(|(&l, q)| (q - indicator(l)).powi(2))
        .sum::<f64>()
        / labels.len() as f64)
}

/// Share of rows where `1{p > 0.5}` disagrees with the label (`p = 0.5` predicts 0).
pub fn misclassification(labels: &[bool], probs: &[f64]) -> Result<f64> {
    check_probs(labels, probs)?;
    let wrong = labels
        .iter()
        .zip(probs)
        .filter(|(&l, &q)| (q > 0.5) != l)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

fn check_pairs(y: &[f64], yhat: &[f64]) -> Result<()> {
    check_dims(y.len(), yhat.len())?;
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub fn mad(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pairs(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse_pred(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pairs(y, yhat)?;
    Ok((y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt())
}

/// Symmetric MAPE in `[0, 2]`; a pair with `y = ŷ = 0` contributes 0.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pairs(y, yhat)?;
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| {
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (a - b).abs() / denom
            }
        })
        .sum::<f64>()
        / y.len() as f64)
}

/// Anything that predicts occurrence and conditional size.
pub trait Predictor {
    /// Probability that an event occurs (not that it is recorded).
    fn predict_occurrence(&self, x: &[f64]) -> Result<f64>;
    /// Mean size given that an event occurs.
    fn predict_magnitude(&self, x: &[f64]) -> Result<f64>;
    /// Size coefficients `β̂`.
    fn magnitude_coef(&self) -> &[f64];
    /// Occurrence coefficients `θ̂`.
    fn occurrence_coef(&self) -> &[f64];
}

impl Predictor for PuOmmModel {
    fn predict_occurrence(&self, x: &[f64]) -> Result<f64> {
        self.occurrence_prob(x)
    }
    fn predict_magnitude(&self, x: &[f64]) -> Result<f64> {
        self.magnitude_mean(x)
    }
    fn magnitude_coef(&self) -> &[f64] {
        &self.omega_hat.beta
    }
    fn occurrence_coef(&self) -> &[f64] {
        &self.omega_hat.theta
    }
}

impl Predictor for TwoPartModel {
    fn predict_occurrence(&self, x: &[f64]) -> Result<f64> {
        self.occurrence_prob(x)
    }
    fn predict_magnitude(&self, x: &[f64]) -> Result<f64> {
        self.magnitude_mean(x)
    }
    fn magnitude_coef(&self) -> &[f64] {
        &self.magnitude_coef
    }
    fn occurrence_coef(&self) -> &[f64] {
        &self.occurrence_coef
    }
}

pub fn predict_occurrence<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<f64> {
    model.predict_occurrence(x)
}

pub fn predict_magnitude<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<f64> {
    model.predict_magnitude(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_name: String,
    pub trial_id: usize,
    pub rmse_beta: Option<f64>,
    pub rmse_theta: Option<f64>,
    pub brier: f64,
    pub misclassification: f64,
    pub mad: f64,
    pub rmse_pred: f64,
    pub smape: f64,
    /// Rows scored for occurrence.
    pub n_eval: usize,
    /// Rows scored for size.
    pub n_size: usize,
}

impl MetricsReport {
    /// Column order of [`MetricsReport::csv_row`].
    pub const CSV_HEADER: [&'static str; 11] = [
        "method",
        "trial",
        "rmse_beta",
        "rmse_theta",
        "brier",
        "misclassification",
        "mad",
        "rmse_pred",
        "smape",
        "n_eval",
        "n_size",
    ];

    /// Metric names and values in a fixed order; parameter errors only when known.
    pub fn metric_values(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::with_capacity(7);
        if let Some(v) = self.rmse_beta {
            out.push(("rmse_beta", v));
        }
        if let Some(v) = self.rmse_theta {
            out.push(("rmse_theta", v));
        }
        out.extend([
            ("brier", self.brier),
            ("misclassification", self.misclassification),
            ("mad", self.mad),
            ("rmse_pred", self.rmse_pred),
            ("smape", self.smape),
        ]);
        out
    }

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.method_name.clone(),
            self.trial_id.to_string(),
            opt(self.rmse_beta),
            opt(self.rmse_theta),
            self.brier.to_string(),
            self.misclassification.to_string(),
            self.mad.to_string(),
            self.rmse_pred.to_string(),
            self.smape.to_string(),
            self.n_eval.to_string(),
            self.n_size.to_string(),
        ]
    }
}

/// What the test set carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Latent `y` known: occurrence scored on `1{y > 0}`, sizes on rows with `y > 0`.
    Simulation,
    /// Only `z` known: occurrence scored on `1{z > 0}`, sizes on rows with `z > 0`.
    RealData,
}

/// True coefficients for parameter-error metrics.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub beta0: &'a [f64],
    pub theta0: &'a [f64],
}

/// Scores each named model on the same test set.
pub fn evaluate_trial(
    models: &[(&str, &dyn Predictor)],
    test: &Dataset,
    truth: Option<Truth<'_>>,
    mode: EvalMode,
    trial_id: usize,
) -> Result<Vec<MetricsReport>> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (labels, sizes): (Vec<bool>, &[f64]) = match mode {
        EvalMode::Simulation => {
            let l = test.latent().ok_or(Error::MissingLatent)?;
            (l.u.clone(), &l.y)
        }
        EvalMode::RealData => (test.observed_labels(), test.z()),
    };
    let size_rows: Vec<usize> = (0..test.n()).filter(|&i| sizes[i] > 0.0).collect();
    if size_rows.is_empty() {
        return Err(Error::NoPositives);
    }
    let size_truth: Vec<f64> = size_rows.iter().map(|&i| sizes[i]).collect();

    models
        .iter()
        .map(|&(name, model)| {
            let probs = test
                .rows()
                .map(|x| model.predict_occurrence(x))
                .collect::<Result<Vec<_>>>()?;
            let size_pred = size_rows
                .iter()
                .map(|&i| model.predict_magnitude(test.row(i)))
                .collect::<Result<Vec<_>>>()?;
            let (rmse_beta, rmse_theta) = match truth {
                Some(t) => (
                    Some(rmse_params(model.magnitude_coef(), t.beta0)?),
                    Some(rmse_params(model.occurrence_coef(), t.theta0)?),
                ),
                None => (None, None),
            };
            Ok(MetricsReport {
                method_name: name.to_string(),
                trial_id,
                rmse_beta,
                rmse_theta,
                brier: brier(&labels, &probs)?,
                misclassification: misclassification(&labels, &probs)?,
                mad: mad(&size_truth, &size_pred)?,
                rmse_pred: rmse_pred(&size_truth, &size_pred)?,
                smape: smape(&size_truth, &size_pred)?,
                n_eval: test.n(),
                n_size: size_rows.len(),
            })
        })
        .collect()
}
