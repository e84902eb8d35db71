//! Synthetic data for the three simulation settings.
//!
//! Every random quantity is drawn from its own ChaCha stream derived from the
//! seed, so the design, the parameters, the latent responses and the
//! missingness never share randomness. Growing `n` keeps `β₀`, `θ₀` and the
//! leading design rows unchanged.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Latent};
use crate::error::{check_dims, Error, Result};
use crate::model::{dot, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Exponential sizes, detection `1 - e^{-λy}`.
    CorrectSpec,
    /// Log-normal sizes, detection `1 - e^{-λy}`.
    MisspecLogNormal,
    /// Exponential sizes, recorded only when `y ≥ τ`.
    MisspecThreshold,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::CorrectSpec => "correct_spec",
            Setting::MisspecLogNormal => "misspec_lognormal",
            Setting::MisspecThreshold => "misspec_threshold",
        }
    }
}

/// Purposes of the independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    Params = 2,
    Latent = 3,
    Missingness = 4,
    TestDesign = 5,
    TestLatent = 6,
    TestMissingness = 7,
    Split = 8,
}

/// RNG for one purpose under one seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn default_n_test() -> usize {
    50_000
}
fn default_lambda() -> f64 {
    0.24
}
fn default_tau() -> f64 {
    3.0
}
fn default_rho() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Detection rate for the first two settings.
    #[serde(default = "default_lambda")]
    pub lambda_eps_true: f64,
    /// Recording threshold for the threshold setting.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Variance of the true coefficients; `None` means `9/p`.
    #[serde(default)]
    pub param_scale: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(setting: Setting, n: usize, p: usize, seed: u64) -> Self {
        Self {
            setting,
            n,
            p,
            n_test: default_n_test(),
            lambda_eps_true: default_lambda(),
            tau: default_tau(),
            rho: default_rho(),
            param_scale: None,
            seed,
        }
    }

    pub fn param_variance(&self) -> f64 {
        self.param_scale.unwrap_or(9.0 / self.p as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be at least 1".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.param_variance() >= 0.0 && self.param_variance().is_finite()) {
            return Err(Error::InvalidInput(
                "param_scale must be a finite variance".into(),
            ));
        }
        match self.setting {
            Setting::CorrectSpec | Setting::MisspecLogNormal => {
                if !(self.lambda_eps_true > 0.0 && self.lambda_eps_true.is_finite()) {
                    return Err(Error::InvalidInput(
                        "lambda_eps_true must be positive".into(),
                    ));
                }
            }
            Setting::MisspecThreshold => {
                if !(self.tau > 0.0 && self.tau.is_finite()) {
                    return Err(Error::InvalidInput("tau must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub beta0: Vec<f64>,
    pub theta0: Vec<f64>,
}

/// `n` rows from `N(0, Σ)` with `Σ_ij = ρ^{|i-j|}`, row-major.
pub fn gen_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let chol = sigma.cholesky().ok_or_else(|| {
        Error::Linalg(format!(
            "covariance with rho = {rho} is not positive definite"
        ))
    })?;
    let l = chol.l();
    let mut x = Vec::with_capacity(n * p);
    let mut z = vec![0.0; p];
    for _ in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for i in 0..p {
            x.push((0..=i).map(|j| l[(i, j)] * z[j]).sum());
        }
    }
    Ok(x)
}

/// Independent `β₀, θ₀ ~ N(0, scale·I_p)`.
pub fn gen_params<R: Rng + ?Sized>(p: usize, scale: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let sd = scale.sqrt();
    let mut draw = || -> Vec<f64> {
        (0..p)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let beta0 = draw();
    let theta0 = draw();
    (beta0, theta0)
}

/// Occurrence `u ~ Ber(σ(xᵀθ₀))` and, when `u = 1`, a positive size whose
/// law depends on the setting.
pub fn gen_latent<R: Rng + ?Sized>(
    x: &[f64],
    beta0: &[f64],
    theta0: &[f64],
    setting: Setting,
    rng: &mut R,
) -> Result<(bool, f64)> {
    check_dims(x.len(), beta0.len())?;
    check_dims(x.len(), theta0.len())?;
    let u = rng.random::<f64>() < sigmoid(dot(x, theta0));
    if !u {
        return Ok((false, 0.0));
    }
    let xb = dot(x, beta0);
    let y: f64 = match setting {
        Setting::CorrectSpec | Setting::MisspecThreshold => {
            let exp = Exp::new((-xb).exp()).map_err(|e| Error::InvalidInput(e.to_string()))?;
            exp.sample(rng)
        }
        Setting::MisspecLogNormal => {
            let ln = LogNormal::new(xb, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
            ln.sample(rng)
        }
    };
    // An exact zero from the sampler would break u = 1{y > 0}.
    Ok((true, y.max(f64::MIN_POSITIVE)))
}

/// Detection flag and recorded size `z = y·r`.
pub fn apply_missingness<R: Rng + ?Sized>(
    y: f64,
    setting: Setting,
    lambda_eps_true: f64,
    tau: f64,
    rng: &mut R,
) -> (bool, f64) {
    let r = match setting {
        Setting::CorrectSpec | Setting::MisspecLogNormal => {
            let draw = rng.random::<f64>();
            y > 0.0 && draw < -(-lambda_eps_true * y).exp_m1()
        }
        Setting::MisspecThreshold => y > 0.0 && y >= tau,
    };
    (r, if r { y } else { 0.0 })
}

fn gen_split(
    cfg: &SimConfig,
    n: usize,
    beta0: &[f64],
    theta0: &[f64],
    streams: (Stream, Stream, Stream),
) -> Result<Dataset> {
    let p = cfg.p;
    let x = gen_design(n, p, cfg.rho, &mut stream_rng(cfg.seed, streams.0))?;
    let mut latent_rng = stream_rng(cfg.seed, streams.1);
    let mut miss_rng = stream_rng(cfg.seed, streams.2);
    let mut latent = Latent {
        y: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
    };
    let mut z = Vec::with_capacity(n);
    for row in x.chunks_exact(p) {
        let (u, y) = gen_latent(row, beta0, theta0, cfg.setting, &mut latent_rng)?;
        let (r, zi) =
            apply_missingness(y, cfg.setting, cfg.lambda_eps_true, cfg.tau, &mut miss_rng);
        latent.y.push(y);
        latent.u.push(u);
        latent.r.push(r);
        z.push(zi);
    }
    Dataset::with_latent(p, x, z, latent)
}

/// Training and test sets sharing `β₀, θ₀`, drawn on separate streams.
pub fn make_datasets(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let (beta0, theta0) = gen_params(
        cfg.p,
        cfg.param_variance(),
        &mut stream_rng(cfg.seed, Stream::Params),
    );
    let train = gen_split(
        cfg,
        cfg.n,
        &beta0,
        &theta0,
        (Stream::Design, Stream::Latent, Stream::Missingness),
    )?;
    let test = gen_split(
        cfg,
        cfg.n_test,
        &beta0,
        &theta0,
        (
            Stream::TestDesign,
            Stream::TestLatent,
            Stream::TestMissingness,
        ),
    )?;
    Ok(SimOutput {
        train,
        test,
        beta0,
        theta0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn cov(x: &[f64], p: usize, a: usize, b: usize) -> f64 {
        let n = x.len() / p;
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        for row in x.chunks_exact(p) {
            sa += row[a];
            sb += row[b];
            sab += row[a] * row[b];
        }
        let n = n as f64;
        sab / n - (sa / n) * (sb / n)
    }

    #[test]
    fn design_covariance() {
        let x = gen_design(100_000, 3, 0.2, &mut rng(1)).unwrap();
        assert!((cov(&x, 3, 0, 1) - 0.2).abs() < 0.01);
        assert!((cov(&x, 3, 0, 2) - 0.04).abs() < 0.01);
        assert!((cov(&x, 3, 0, 0) - 1.0).abs() < 0.02);

        let x = gen_design(100_000, 3, 0.0, &mut rng(2)).unwrap();
        assert!(cov(&x, 3, 0, 1).abs() < 0.01);
        assert!(cov(&x, 3, 1, 2).abs() < 0.01);

        assert_eq!(
            gen_design(50, 4, 0.2, &mut rng(3)).unwrap(),
            gen_design(50, 4, 0.2, &mut rng(3)).unwrap()
        );
    }

    #[test]
    fn design_rejects_singular_covariance() {
        assert!(gen_design(5, 3, 1.0, &mut rng(0)).is_err());
    }

    #[test]
    fn params_moments() {
        let mut r = rng(4);
        let (mut betas, mut thetas) = (Vec::new(), Vec::new());
        for _ in 0..10_000 {
            let (b, t) = gen_params(10, 0.9, &mut r);
            betas.extend(b);
            thetas.extend(t);
        }
        let n = betas.len() as f64;
        let var = betas.iter().map(|b| b * b).sum::<f64>() / n;
        assert!((var - 0.9).abs() < 0.9 * 0.02, "var {var}");
        let corr = betas.iter().zip(&thetas).map(|(a, b)| a * b).sum::<f64>()
            / n
            / (var * thetas.iter().map(|t| t * t).sum::<f64>() / n).sqrt();
        assert!(corr.abs() < 0.01, "corr {corr}");

        let (b, t) = gen_params(5, 0.0, &mut r);
        assert!(b.iter().chain(&t).all(|v| *v == 0.0));
    }

    #[test]
    fn latent_exponential_mean() {
        let mut r = rng(5);
        let (mut sum, mut count) = (0.0, 0);
        while count < 100_000 {
            let (u, y) = gen_latent(&[1.0], &[1.0], &[3.0], Setting::CorrectSpec, &mut r).unwrap();
            if u {
                sum += y;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(
            (mean / std::f64::consts::E - 1.0).abs() < 0.02,
            "mean {mean}"
        );
    }

    #[test]
    fn latent_lognormal_log_mean() {
        let mut r = rng(6);
        let (mut sum, mut count) = (0.0, 0);
        while count < 100_000 {
            let (u, y) =
                gen_latent(&[1.0], &[0.4], &[3.0], Setting::MisspecLogNormal, &mut r).unwrap();
            if u {
                sum += y.ln();
                count += 1;
            }
        }
        assert!((sum / count as f64 - 0.4).abs() < 0.02);
    }

    #[test]
    fn latent_vanishing_occurrence() {
        let mut r = rng(7);
        for _ in 0..1000 {
            assert_eq!(
                gen_latent(&[1.0], &[0.5], &[-50.0], Setting::CorrectSpec, &mut r).unwrap(),
                (false, 0.0)
            );
        }
    }

    #[test]
    fn missingness_rules() {
        let mut r = rng(8);
        assert_eq!(
            apply_missingness(0.0, Setting::CorrectSpec, 0.24, 3.0, &mut r),
            (false, 0.0)
        );
        assert_eq!(
            apply_missingness(2.9, Setting::MisspecThreshold, 0.24, 3.0, &mut r),
            (false, 0.0)
        );
        assert_eq!(
            apply_missingness(3.1, Setting::MisspecThreshold, 0.24, 3.0, &mut r),
            (true, 3.1)
        );

        let y = 2f64.ln() / 0.24;
        let hits = (0..100_000)
            .filter(|_| apply_missingness(y, Setting::CorrectSpec, 0.24, 3.0, &mut r).0)
            .count();
        assert!((hits as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn stream_separation() {
        let mut cfg = SimConfig::new(Setting::CorrectSpec, 5000, 10, 99);
        cfg.n_test = 10;
        let a = make_datasets(&cfg).unwrap();
        cfg.n = 10_000;
        let b = make_datasets(&cfg).unwrap();
        assert_eq!(a.beta0, b.beta0);
        assert_eq!(a.theta0, b.theta0);
        assert_eq!(a.train.features(), &b.train.features()[..5000 * 10]);
        assert_eq!(a.train.z(), &b.train.z()[..5000]);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn pseudo_negatives_exist() {
        let mut cfg = SimConfig::new(Setting::CorrectSpec, 5000, 10, 3);
        cfg.n_test = 10;
        let out = make_datasets(&cfg).unwrap();
        let l = out.train.latent().unwrap();
        let hidden = (0..out.train.n())
            .filter(|&i| l.u[i] && out.train.z()[i] == 0.0)
            .count();
        assert!(hidden > 0);
    }

    #[test]
    fn threshold_setting_records_only_large_sizes() {
        let mut cfg = SimConfig::new(Setting::MisspecThreshold, 5000, 10, 4);
        cfg.n_test = 10;
        let out = make_datasets(&cfg).unwrap();
        let l = out.train.latent().unwrap();
        for i in 0..out.train.n() {
            let z = out.train.z()[i];
            assert_eq!(z > 0.0, l.y[i] >= cfg.tau);
            if z > 0.0 {
                assert!(z >= cfg.tau);
            }
        }
    }

    #[test]
    fn determinism_and_row_invariants() {
        let mut cfg = SimConfig::new(Setting::MisspecLogNormal, 2000, 5, 11);
        cfg.n_test = 500;
        let a = make_datasets(&cfg).unwrap();
        assert_eq!(a, make_datasets(&cfg).unwrap());
        for i in 0..a.train.n() {
            assert!(a.train.latent_row(i).unwrap().is_consistent());
        }
    }
}
