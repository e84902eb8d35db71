mod common;

use common::*;
use proptest::prelude::*;
use puomm::model::{
    self, loss_and_gradient_stacked, mixture_link, mixture_link_partials,
    neg_log_likelihood_stacked, per_sample_loss, phi, sigmoid,
};
use puomm::{Dataset, DetectionParam, ParamPair};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn case() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=200, 1usize..=10)
}

/// The gradient written out term by term through `h`, `h₁`, `h₂`, as an
/// independent check on the library's simplified form.
fn gradient_via_link(w: &[f64], data: &Dataset, lambda: f64) -> Vec<f64> {
    let p = data.p();
    let (beta, theta) = w.split_at(p);
    let mut g = vec![0.0; 2 * p];
    for s in data.samples() {
        let xb: f64 = s.x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let xt: f64 = s.x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let a = xb + lambda.ln();
        let q = sigmoid(mixture_link(a, xt));
        let (h1, h2) = mixture_link_partials(a, xt);
        let u = if s.z > 0.0 { 1.0 } else { 0.0 };
        let cb = (u - q) * h1 - u * (1.0 - (-xb).exp() * s.z + sigmoid(-a));
        let ct = (u - q) * h2;
        for j in 0..p {
            g[j] -= cb * s.x[j] / data.n() as f64;
            g[p + j] -= ct * s.x[j] / data.n() as f64;
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_finite_differences((seed, n, p) in case()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, n, p);
        let w = random_omega(&mut rng, p);
        let d = DetectionParam::new(random_lambda(&mut rng)).unwrap();
        let (_, g) = loss_and_gradient_stacked(&w, &data, d).unwrap();
        let fd = fd_gradient(|v| neg_log_likelihood_stacked(v, &data, d).unwrap(), &w, 1e-3);
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!(rel_err(*a, *b, 1e-8) < 1e-6, "analytic {a} fd {b}");
        }
    }

    #[test]
    fn gradient_matches_link_form((seed, n, p) in case()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, n, p);
        let w = random_omega(&mut rng, p);
        let lambda = random_lambda(&mut rng);
        let (_, g) = loss_and_gradient_stacked(&w, &data, DetectionParam::new(lambda).unwrap()).unwrap();
        for (a, b) in g.iter().zip(gradient_via_link(&w, &data, lambda)) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn loss_is_mean_of_sample_terms((seed, n, p) in case()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, n, p);
        let w = random_omega(&mut rng, p);
        let d = DetectionParam::new(random_lambda(&mut rng)).unwrap();
        let omega = ParamPair::from_stacked(&w).unwrap();
        let sum: f64 = data.samples().map(|s| per_sample_loss(&omega, s, d).unwrap()).sum();
        let l = neg_log_likelihood_stacked(&w, &data, d).unwrap();
        prop_assert!((l + sum / n as f64).abs() < 1e-12 * (1.0 + l.abs()));
        let (l2, _) = loss_and_gradient_stacked(&w, &data, d).unwrap();
        prop_assert!((l - l2).abs() <= 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn loss_ignores_row_order_and_duplication((seed, n, p) in case()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, n, p);
        let w = random_omega(&mut rng, p);
        let d = DetectionParam::new(random_lambda(&mut rng)).unwrap();
        let l = neg_log_likelihood_stacked(&w, &data, d).unwrap();
        let reversed: Vec<usize> = (0..n).rev().collect();
        let doubled: Vec<usize> = (0..n).chain(0..n).collect();
        for idx in [reversed, doubled] {
            let l2 = neg_log_likelihood_stacked(&w, &data.subset(&idx), d).unwrap();
            prop_assert!((l - l2).abs() < 1e-12 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn phi_matches_quadrature(xb in -3.0f64..3.0, lambda_log in 0.02f64.ln()..50f64.ln()) {
        let lambda = lambda_log.exp();
        let closed = phi(&[1.0], &[xb], DetectionParam::new(lambda).unwrap()).unwrap();
        prop_assert!((closed - phi_by_quadrature(xb, lambda)).abs() < 1e-8);
        prop_assert!((closed - sigmoid(xb + lambda.ln())).abs() < 1e-12);
    }

    #[test]
    fn observed_occurrence_is_a_probability(xb in -30.0f64..30.0, xt in -30.0f64..30.0, lambda_log in -10.0f64..10.0) {
        let omega = ParamPair::new(vec![xb], vec![xt]).unwrap();
        let q = model::observed_occurrence_prob(&omega, DetectionParam::new(lambda_log.exp()).unwrap(), &[1.0]).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(q <= sigmoid(xt) + 1e-15);
    }
}

#[test]
fn phi_quadrature_spot_value() {
    let d = DetectionParam::new(0.24).unwrap();
    let closed = phi(&[1.0], &[0.7], d).unwrap();
    assert!((closed - phi_by_quadrature(0.7, 0.24)).abs() < 1e-8);
}

#[test]
fn all_positive_theta_block_is_logistic_score() {
    // with every z > 0 the θ-block is the logistic score on all-ones labels
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let base = random_dataset(&mut rng, 60, 3);
    let z: Vec<f64> = base.z().iter().map(|v| v + 0.5).collect();
    let data = Dataset::new(3, base.features().to_vec(), z).unwrap();
    let w = random_omega(&mut rng, 3);
    let (_, g) = loss_and_gradient_stacked(&w, &data, DetectionParam::new(0.3).unwrap()).unwrap();
    let logistic = |theta: &[f64]| -> f64 {
        data.rows()
            .map(|x| -model::log_sigmoid(x.iter().zip(theta).map(|(a, b)| a * b).sum()))
            .sum::<f64>()
            / data.n() as f64
    };
    let fd = fd_gradient(logistic, &w[3..], 1e-3);
    for (a, b) in g[3..].iter().zip(&fd) {
        assert!(rel_err(*a, *b, 1e-8) < 1e-6);
    }
}

#[test]
fn extreme_predictors_stay_finite() {
    let x = vec![1.0, 1.0, 1.0, -1.0];
    let data = Dataset::new(2, x, vec![0.0, 2.0]).unwrap();
    for w in [[20.0, 0.0, 30.0, -25.0], [-20.0, 5.0, -30.0, 25.0]] {
        for lambda in [1e-6, 1e6] {
            let (l, g) =
                loss_and_gradient_stacked(&w, &data, DetectionParam::new(lambda).unwrap()).unwrap();
            assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));
        }
    }
}
