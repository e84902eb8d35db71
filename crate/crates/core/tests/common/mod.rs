//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use puomm::Dataset;
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `∫₀^∞ (1 - e^{-λy}) g(y) dy` for the exponential law of mean `e^{xb}`,
/// integrated in `t = y / mean` over `[0, 60]`.
pub fn phi_by_quadrature(xb: f64, lambda: f64) -> f64 {
    let scale = lambda * xb.exp();
    let integrand = |t: f64| -(-scale * t).exp_m1() * (-t).exp();
    adaptive_simpson(&integrand, 0.0, 60.0, 1e-13)
}

/// Five-point central differences of `f` at `w`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|j| {
            let mut at = |d: f64| {
                probe[j] = w[j] + d;
                let v = f(&probe);
                probe[j] = w[j];
                v
            };
            let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
            (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Small random dataset: features uniform on `[-2, 2]`, about half the
/// sizes zero and the rest exponential with mean 2.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let size = Exp::new(0.5).unwrap();
    let z: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                size.sample(rng) + 1e-3
            }
        })
        .collect();
    Dataset::new(p, x, z).unwrap()
}

/// Random stacked `[β; θ]` with entries uniform on `[-1, 1]`.
pub fn random_omega<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..2 * p).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `λ` log-uniform on `[0.02, 50]`.
pub fn random_lambda<R: Rng>(rng: &mut R) -> f64 {
    (rng.random_range(0.02f64.ln()..50f64.ln())).exp()
}

/// Closed form of `E[u z | x]` under the correctly specified model.
pub fn expected_uz(xb: f64, xt: f64, lambda: f64) -> f64 {
    let s = puomm::model::sigmoid;
    let phi = s(xb + lambda.ln());
    s(xt) * phi * xb.exp() * (2.0 - phi)
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
