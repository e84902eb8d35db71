//! Projected gradient descent on an ℓ2 ball with backtracking-Armijo steps.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::model::{self, l2_norm, DetectionParam, ParamPair};

/// Smallest trial step before the line search gives up.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Radius `r` of the feasible ball `B₂(r)`.
    pub radius: f64,
    pub init_step: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub max_iter: usize,
    /// Stop once `‖ω^{t+1} - ω^t‖₂ ≤ tol`.
    pub tol: f64,
    /// Number of trailing iterates to keep in [`FitResult::tail`] (0 = none).
    #[serde(default)]
    pub keep_tail: usize,
}

impl FitConfig {
    /// Defaults for `p` features: `r = 5√p`, unit initial step halved on failure.
    pub fn for_dim(p: usize) -> Self {
        Self {
            radius: 5.0 * (p as f64).sqrt(),
            init_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            max_iter: 10_000,
            tol: 1e-8,
            keep_tail: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.radius > 0.0
            && self.radius.is_finite()
            && self.init_step > 0.0
            && self.init_step.is_finite()
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.tol > 0.0
            && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid optimizer configuration: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Loss at the new iterate.
    pub loss: f64,
    pub step_size: f64,
    pub iterate_change: f64,
    pub iterate_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub omega_hat: ParamPair,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    /// True when the run ended because no step above [`MIN_STEP`] gave sufficient decrease.
    #[serde(default)]
    pub line_search_failed: bool,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    /// The last `keep_tail + 1` iterates (stacked), oldest first, ending with `ω̂`.
    #[serde(skip)]
    pub tail: Vec<Vec<f64>>,
}

/// A differentiable loss over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// `L_n` for a fixed dataset and detection rate, over stacked `[β; θ]`.
#[derive(Debug, Clone, Copy)]
pub struct NegLogLikelihood<'a> {
    pub data: &'a Dataset,
    pub detection: DetectionParam,
}

impl Objective for NegLogLikelihood<'_> {
    fn dim(&self) -> usize {
        2 * self.data.p()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        model::neg_log_likelihood_stacked(w, self.data, self.detection)
    }

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        model::loss_and_gradient_stacked(w, self.data, self.detection)
    }
}

/// Euclidean projection onto `{v : ‖v‖₂ ≤ r}`.
pub fn project_l2_ball(v: &[f64], r: f64) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm <= r {
        v.to_vec()
    } else {
        let scale = r / norm;
        v.iter().map(|x| x * scale).collect()
    }
}

/// Outcome of one backtracking search.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoStep {
    pub candidate: Vec<f64>,
    /// Accepted step, or `0.0` when the search failed and `candidate == ω`.
    pub step: f64,
    pub loss: f64,
    /// Gradient at `candidate`.
    pub grad: Vec<f64>,
}

/// Backtracking search for `ω⁺ = P(ω - η∇)` satisfying
/// `L(ω⁺) ≤ L(ω) - (c/η)‖ω⁺ - ω‖²`, trying `η = init_step · factor^k`.
/// `eval` returns the loss and gradient at a trial point, so the accepted
/// point needs no second pass.
pub fn armijo_step<F>(
    omega: &[f64],
    loss: f64,
    grad: &[f64],
    mut eval: F,
    cfg: &FitConfig,
) -> Result<ArmijoStep>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    check_dims(omega.len(), grad.len())?;
    let mut step = cfg.init_step;
    let mut trial = vec![0.0; omega.len()];
    while step >= MIN_STEP {
        for ((t, w), g) in trial.iter_mut().zip(omega).zip(grad) {
            *t = w - step * g;
        }
        let candidate = project_l2_ball(&trial, cfg.radius);
        let moved: f64 = candidate
            .iter()
            .zip(omega)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let (new_loss, new_grad) = eval(&candidate)?;
        if !new_loss.is_finite() {
            return Err(Error::NonFinite {
                context: "line search loss",
                sample: None,
            });
        }
        if new_loss <= loss - cfg.armijo_c / step * moved {
            return Ok(ArmijoStep {
                candidate,
                step,
                loss: new_loss,
                grad: new_grad,
            });
        }
        step *= cfg.backtrack_factor;
    }
    Ok(ArmijoStep {
        candidate: omega.to_vec(),
        step: 0.0,
        loss,
        grad: grad.to_vec(),
    })
}

/// Runs projected gradient descent from `w0` on any [`Objective`].
pub fn minimize<O: Objective>(objective: &O, cfg: &FitConfig, w0: &[f64]) -> Result<FitResult> {
    cfg.validate()?;
    check_dims(objective.dim(), w0.len())?;
    if l2_norm(w0) > cfg.radius * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "initial point has norm {} outside the search ball of radius {}",
            l2_norm(w0),
            cfg.radius
        )));
    }

    let mut w = w0.to_vec();
    let mut trace = Vec::new();
    let mut tail = std::collections::VecDeque::with_capacity(cfg.keep_tail + 1);
    tail.push_back(w.clone());
    let (mut loss, mut grad) = objective.value_and_gradient(&w)?;
    let mut converged = false;
    let mut line_search_failed = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let step = armijo_step(&w, loss, &grad, |c| objective.value_and_gradient(c), cfg)?;
        iterations += 1;
        if step.step == 0.0 {
            line_search_failed = true;
            break;
        }
        let change = l2_norm(
            &step
                .candidate
                .iter()
                .zip(&w)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        w = step.candidate;
        loss = step.loss;
        grad = step.grad;
        trace.push(TraceEntry {
            iteration: iterations,
            loss,
            step_size: step.step,
            iterate_change: change,
            iterate_norm: l2_norm(&w),
        });
        if cfg.keep_tail > 0 {
            if tail.len() == cfg.keep_tail + 1 {
                tail.pop_front();
            }
            tail.push_back(w.clone());
        }
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }

    let tail = if cfg.keep_tail > 0 {
        tail.into()
    } else {
        Vec::new()
    };
    Ok(FitResult {
        omega_hat: ParamPair::from_stacked(&w)?,
        converged,
        iterations,
        final_loss: loss,
        line_search_failed,
        trace,
        tail,
    })
}

/// Minimizes `L_n` over `B₂(r)` for a fixed detection rate.
pub fn fit(
    data: &Dataset,
    d: DetectionParam,
    cfg: &FitConfig,
    omega0: &ParamPair,
) -> Result<FitResult> {
    check_dims(data.p(), omega0.p())?;
    let objective = NegLogLikelihood { data, detection: d };
    minimize(&objective, cfg, &omega0.to_stacked())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, w: &[f64]) -> Result<f64> {
            Ok(0.5 * w.iter().map(|x| x * x).sum::<f64>())
        }
        fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.value(w)?, w.to_vec()))
        }
    }

    fn cfg(r: f64) -> FitConfig {
        FitConfig {
            radius: r,
            ..FitConfig::for_dim(1)
        }
    }

    #[test]
    fn projection() {
        assert_eq!(project_l2_ball(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
        let v = project_l2_ball(&[3.0, 4.0], 1.0);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_l2_ball(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn armijo_quadratic_accepts_unit_step() {
        let q = Quadratic;
        let w = [1.0, 0.0];
        let out = armijo_step(&w, 0.5, &w, |c| q.value_and_gradient(c), &cfg(10.0)).unwrap();
        assert_eq!(out.step, 1.0);
        assert_eq!(out.candidate, vec![0.0, 0.0]);
    }

    #[test]
    fn armijo_stationary_point() {
        let w = [0.3, -0.2];
        let out = armijo_step(
            &w,
            1.0,
            &[0.0, 0.0],
            |_| Ok((1.0, vec![0.0; 2])),
            &cfg(10.0),
        )
        .unwrap();
        assert_eq!(out.candidate, w.to_vec());
        assert!(out.step > 0.0);
    }

    #[test]
    fn armijo_projects_outward_steps() {
        let r = 2.0;
        let w = [0.9 * r, 0.0];
        // a linear loss decreasing outward
        let out = armijo_step(
            &w,
            -w[0],
            &[-100.0, 0.0],
            |c| Ok((-c[0], vec![-1.0, 0.0])),
            &cfg(r),
        )
        .unwrap();
        assert!(l2_norm(&out.candidate) <= r + 1e-12);
        assert!(out.step > 0.0);
    }

    #[test]
    fn armijo_failure_returns_current_point() {
        let w = [1.0];
        // loss rises in every direction: no step qualifies
        let out = armijo_step(&w, 0.0, &[1.0], |_| Ok((1.0, vec![0.0])), &cfg(10.0)).unwrap();
        assert_eq!(out.step, 0.0);
        assert_eq!(out.candidate, w.to_vec());
    }

    #[test]
    fn armijo_non_finite_is_error() {
        let err = armijo_step(
            &[1.0],
            0.0,
            &[1.0],
            |_| Ok((f64::NAN, vec![0.0])),
            &cfg(10.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn minimize_quadratic() {
        let res = minimize(&Quadratic, &cfg(10.0), &[2.0, -1.0]).unwrap();
        assert!(res.converged);
        assert!(l2_norm(&res.omega_hat.to_stacked()) < 1e-8);
    }

    #[test]
    fn huge_tol_stops_after_one_iteration() {
        let c = FitConfig {
            tol: 1e9,
            ..cfg(10.0)
        };
        let res = minimize(&Quadratic, &c, &[2.0, -1.0]).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn rejects_bad_config_and_start() {
        let bad = FitConfig {
            backtrack_factor: 1.0,
            ..cfg(1.0)
        };
        assert!(minimize(&Quadratic, &bad, &[0.0, 0.0]).is_err());
        assert!(minimize(&Quadratic, &cfg(1.0), &[2.0, 0.0]).is_err());
    }

    #[test]
    fn keeps_tail_of_iterates() {
        let c = FitConfig {
            keep_tail: 3,
            ..cfg(10.0)
        };
        let res = minimize(&Quadratic, &c, &[2.0, -1.0]).unwrap();
        assert!(res.tail.len() <= 4);
        assert_eq!(res.tail.last().unwrap(), &res.omega_hat.to_stacked());
    }
}
