//! Detection-rate selection: fit on a log-spaced grid of `λ` and keep the
//! fit whose observed-occurrence predictions have the lowest training Brier
//! score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{self, l2_norm, DetectionParam, ParamPair};
use crate::optimizer::{self, FitConfig, FitResult};

pub use crate::model::observed_occurrence_prob;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    /// Grid from explicit values. They must be positive, finite and sorted
    /// (repeats are allowed; [`make_lambda_grid`] never produces them).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("lambda grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "lambda grid values must be positive".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("lambda grid must be sorted".into()));
        }
        Ok(Self(values))
    }

    pub fn single(lambda: DetectionParam) -> Self {
        Self(vec![lambda.lambda()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `n_points` values from `lo` to `hi`, equally spaced in `log λ`.
pub fn make_lambda_grid(n_points: usize, lo: f64, hi: f64) -> Result<LambdaGrid> {
    if n_points < 2 || !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need n_points >= 2 and 0 < lo < hi, got ({n_points}, {lo}, {hi})"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = n_points - 1;
    let values = (0..n_points)
        .map(|k| match k {
            0 => lo,
            k if k == last => hi,
            k => (a + (b - a) * k as f64 / last as f64).exp(),
        })
        .collect();
    Ok(LambdaGrid(values))
}

/// How each grid fit is initialized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `ω⁰ = 0` for every grid value.
    #[default]
    Zero,
    /// Start from separate logistic (on `1{z>0}`) and exponential (on `z > 0`)
    /// fits, shrunk into `B₂(r/2)`.
    Baseline,
    /// Fit the grid in order, each starting from the previous solution.
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub lambda: f64,
    /// Training Brier score, `None` if the fit at this `λ` failed.
    pub brier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuOmmModel {
    pub omega_hat: ParamPair,
    pub lambda_hat: DetectionParam,
    pub fit: FitResult,
    pub selection_scores: Vec<SelectionScore>,
}

impl PuOmmModel {
    /// True-occurrence probability `σ(xᵀθ̂)`.
    pub fn occurrence_prob(&self, x: &[f64]) -> Result<f64> {
        model::occurrence_prob(x, &self.omega_hat.theta)
    }

    /// Conditional mean size given occurrence, `e^{xᵀβ̂}`.
    pub fn magnitude_mean(&self, x: &[f64]) -> Result<f64> {
        crate::error::check_dims(self.omega_hat.p(), x.len())?;
        Ok(model::dot(x, &self.omega_hat.beta).exp())
    }

    pub fn observed_occurrence_prob(&self, x: &[f64]) -> Result<f64> {
        observed_occurrence_prob(&self.omega_hat, self.lambda_hat, x)
    }
}

/// Brier score of `q̂(λ)` against `v = 1{z > 0}` on `data`.
pub fn observed_brier(omega: &ParamPair, lambda: DetectionParam, data: &Dataset) -> Result<f64> {
    let probs = data
        .rows()
        .map(|x| observed_occurrence_prob(omega, lambda, x))
        .collect::<Result<Vec<_>>>()?;
    metrics::brier(&data.observed_labels(), &probs)
}

fn baseline_start(train: &Dataset, radius: f64) -> Result<ParamPair> {
    let theta =
        baselines::fit_logistic(train.features(), train.p(), &train.observed_labels())?.coef;
    let positives: Vec<usize> = (0..train.n()).filter(|&i| train.z()[i] > 0.0).collect();
    let pos = train.subset(&positives);
    let beta = match baselines::fit_exponential_glm(pos.features(), pos.p(), pos.z()) {
        Ok(fit) => fit.coef,
        Err(_) => vec![0.0; train.p()],
    };
    let w = optimizer::project_l2_ball(&ParamPair::new(beta, theta)?.to_stacked(), 0.5 * radius);
    ParamPair::from_stacked(&w)
}

/// Fits every grid value and keeps the lowest training Brier score; ties go to
/// the smaller `λ`. Grid fits start from zero.
pub fn fit_pu_omm(train: &Dataset, grid: &LambdaGrid, cfg: &FitConfig) -> Result<PuOmmModel> {
    fit_pu_omm_with(train, grid, cfg, Init::Zero)
}

pub fn fit_pu_omm_with(
    train: &Dataset,
    grid: &LambdaGrid,
    cfg: &FitConfig,
    init: Init,
) -> Result<PuOmmModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;

    let fit_one = |lambda: f64, start: &ParamPair| -> Result<(FitResult, f64)> {
        let d = DetectionParam::new(lambda)?;
        let res = optimizer::fit(train, d, cfg, start)?;
        let brier = observed_brier(&res.omega_hat, d, train)?;
        Ok((res, brier))
    };

    let fits: Vec<Result<(FitResult, f64)>> = match init {
        Init::Zero => {
            let zero = ParamPair::zeros(train.p());
            grid.values()
                .par_iter()
                .map(|&l| fit_one(l, &zero))
                .collect()
        }
        Init::Baseline => {
            let start = baseline_start(train, cfg.radius)?;
            grid.values()
                .par_iter()
                .map(|&l| fit_one(l, &start))
                .collect()
        }
        Init::Chained => {
            let mut start = ParamPair::zeros(train.p());
            let mut out = Vec::with_capacity(grid.len());
            for &l in grid.values() {
                let r = fit_one(l, &start);
                if let Ok((res, _)) = &r {
                    start = res.omega_hat.clone();
                    if l2_norm(&start.to_stacked()) > cfg.radius {
                        start = ParamPair::from_stacked(&optimizer::project_l2_ball(
                            &start.to_stacked(),
                            cfg.radius,
                        ))?;
                    }
                }
                out.push(r);
            }
            out
        }
    };

    let mut scores = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut results = Vec::with_capacity(grid.len());
    for (k, (&lambda, r)) in grid.values().iter().zip(fits).enumerate() {
        match r {
            Ok((res, brier)) => {
                scores.push(SelectionScore {
                    lambda,
                    brier: Some(brier),
                });
                if best.is_none_or(|(_, b)| brier < b) {
                    best = Some((k, brier));
                }
                results.push(Some(res));
            }
            Err(e) => {
                scores.push(SelectionScore {
                    lambda,
                    brier: None,
                });
                failures.push((lambda, e.to_string()));
                results.push(None);
            }
        }
    }

    let (k, _) = best.ok_or(Error::AllFitsFailed(failures))?;
    let fit = results[k].take().expect("selected fit exists");
    Ok(PuOmmModel {
        omega_hat: fit.omega_hat.clone(),
        lambda_hat: DetectionParam::new(grid.values()[k])?,
        fit,
        selection_scores: scores,
    })
}

/// Fit at a known detection rate, skipping selection.
pub fn fit_pu_omm_fixed(
    train: &Dataset,
    lambda: DetectionParam,
    cfg: &FitConfig,
) -> Result<PuOmmModel> {
    fit_pu_omm(train, &LambdaGrid::single(lambda), cfg)
}
