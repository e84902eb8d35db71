//! The estimators compared in experiments, behind one dispatch point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, MagnitudeFamily, TwoPartModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::model::DetectionParam;
use crate::optimizer::FitConfig;
use crate::selection::{self, make_lambda_grid, Init, PuOmmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Logistic + exponential GLM on the latent `y` (simulation only).
    Oracle,
    /// Mixture estimator with `λ` chosen by training Brier score.
    PuOmm,
    /// Mixture estimator at a supplied `λ`.
    PuOmmTrueLambda,
    LogisticGamma,
    LogisticLognormal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Oracle,
        Method::PuOmm,
        Method::PuOmmTrueLambda,
        Method::LogisticGamma,
        Method::LogisticLognormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::PuOmm => "pu_omm",
            Method::PuOmmTrueLambda => "pu_omm_true_lambda",
            Method::LogisticGamma => "logistic_gamma",
            Method::LogisticLognormal => "logistic_lognormal",
        }
    }

    pub fn needs_latent(self) -> bool {
        self == Method::Oracle
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

fn default_grid_size() -> usize {
    20
}
fn default_grid_lo() -> f64 {
    0.02
}
fn default_grid_hi() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_grid_size")]
    pub size: usize,
    #[serde(default = "default_grid_lo")]
    pub lo: f64,
    #[serde(default = "default_grid_hi")]
    pub hi: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            size: default_grid_size(),
            lo: default_grid_lo(),
            hi: default_grid_hi(),
        }
    }
}

/// Optimizer settings; unset fields take the [`FitConfig::for_dim`] defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub init_step: Option<f64>,
    #[serde(default)]
    pub backtrack_factor: Option<f64>,
    #[serde(default)]
    pub armijo_c: Option<f64>,
}

impl OptimizerOptions {
    pub fn config(&self, p: usize) -> FitConfig {
        let d = FitConfig::for_dim(p);
        FitConfig {
            radius: self.radius.unwrap_or(d.radius),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            init_step: self.init_step.unwrap_or(d.init_step),
            backtrack_factor: self.backtrack_factor.unwrap_or(d.backtrack_factor),
            armijo_c: self.armijo_c.unwrap_or(d.armijo_c),
            keep_tail: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub grid: GridSpec,
    /// Detection rate for [`Method::PuOmmTrueLambda`].
    #[serde(default)]
    pub true_lambda: Option<f64>,
    #[serde(default)]
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    PuOmm(PuOmmModel),
    TwoPart(TwoPartModel),
}

impl FittedModel {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            FittedModel::PuOmm(m) => m,
            FittedModel::TwoPart(m) => m,
        }
    }

    pub fn p(&self) -> usize {
        self.as_predictor().occurrence_coef().len()
    }
}

/// A PU-OMM fit whose line search stalled is an error; running out of
/// iterations is not.
fn checked(model: PuOmmModel) -> Result<PuOmmModel> {
    if model.fit.line_search_failed {
        return Err(Error::LineSearchFailed {
            lambda: model.lambda_hat.lambda(),
            iterations: model.fit.iterations,
        });
    }
    Ok(model)
}

/// Fits `method` on `train`. Only the oracle sees latent columns.
pub fn fit_method(method: Method, train: &Dataset, opts: &MethodOptions) -> Result<FittedModel> {
    let observed = train.observed_only();
    let cfg = opts.optimizer.config(train.p());
    Ok(match method {
        Method::Oracle => FittedModel::TwoPart(baselines::fit_oracle(train)?),
        Method::PuOmm => {
            let grid = make_lambda_grid(opts.grid.size, opts.grid.lo, opts.grid.hi)?;
            FittedModel::PuOmm(selection::fit_pu_omm_with(
                &observed, &grid, &cfg, opts.init,
            )?)
        }
        Method::PuOmmTrueLambda => {
            let lambda = opts.true_lambda.ok_or_else(|| {
                Error::InvalidInput("pu_omm_true_lambda needs a detection rate".into())
            })?;
            FittedModel::PuOmm(checked(selection::fit_pu_omm_fixed(
                &observed,
                DetectionParam::new(lambda)?,
                &cfg,
            )?)?)
        }
        Method::LogisticGamma => FittedModel::TwoPart(baselines::fit_observed_mixture(
            &observed,
            MagnitudeFamily::Gamma,
        )?),
        Method::LogisticLognormal => FittedModel::TwoPart(baselines::fit_observed_mixture(
            &observed,
            MagnitudeFamily::LogNormal,
        )?),
    })
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: Method,
    /// A leading column of ones was added to the features before fitting.
    pub intercept: bool,
    pub model: FittedModel,
}
