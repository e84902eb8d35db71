//! Occurrence/magnitude mixture regression when positive labels go missing
//! at a rate that depends on the event size.
//!
//! The model pairs a logistic occurrence part `P(y > 0 | x) = σ(xᵀθ)` with an
//! exponential size law of mean `e^{xᵀβ}`, and observes `z = y·r` where a
//! positive event of size `y` is recorded with probability `1 - e^{-λy}`.
//! [`selection::fit_pu_omm`] fits `(β, θ)` by projected gradient descent on a
//! grid of detection rates `λ` and keeps the one with the best observed Brier
//! score.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod methods;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod selection;
pub mod simulate;

pub use data::Dataset;
pub use error::{Error, Result};
pub use methods::{fit_method, FittedModel, Method, MethodOptions, ModelFile};
pub use model::{DetectionParam, ParamPair};
pub use optimizer::{fit, FitConfig, FitResult};
pub use selection::{fit_pu_omm, make_lambda_grid, LambdaGrid, PuOmmModel};
pub use simulate::{make_datasets, Setting, SimConfig, SimOutput};
