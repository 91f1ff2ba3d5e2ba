//! Agreement with independent reference computations written here from
//! scratch: binomial expansions, Monte Carlo, finite differences and brute
//! force minimization.

use rand::Rng;
use rand_distr::StandardNormal;

use dpopt::accountant::{
    calibrate, epsilon, numeric_poisson_rdp, Accountant, AccountantConfig, PrivacyBudget, MAX_ORDER,
};
use dpopt::bias_lab::{
    expected_direction, first_order_check_sgd, gaussian_point, toy_a_closed_form,
    toy_a_monte_carlo, DirectionMode, ToyParams,
};
use dpopt::linalg::{norm, sub};
use dpopt::optimizer::sample_batch;
use dpopt::oracle::{
    make_cosh_objective, make_logistic_objective, make_quadratic_objective, NoiseModel, Objective,
};
use dpopt::rng::stream_rng;

fn ln_choose(n: u32, k: u32) -> f64 {
    (1..=k)
        .map(|i| (f64::from(n - k + i) / f64::from(i)).ln())
        .sum()
}

/// `ln E_{N(0,σ²)}[((1−γ) + γ·e^{(2x−1)/(2σ²)})^α]` by the binomial theorem.
fn binomial_log_moment(alpha: u32, sigma: f64, gamma: f64) -> f64 {
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let k_f = f64::from(k);
            ln_choose(alpha, k)
                + f64::from(alpha - k) * (1.0 - gamma).ln()
                + k_f * gamma.ln()
                + k_f * (k_f - 1.0) / (2.0 * sigma * sigma)
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn binomial_rdp(alpha: u32, sigma: f64, gamma: f64) -> f64 {
    binomial_log_moment(alpha, sigma, gamma) / f64::from(alpha - 1)
}

#[test]
fn numeric_rdp_matches_binomial_expansion() {
    let orders: Vec<u32> = (2..=256).step_by(17).chain([255, 256]).collect();
    for sigma in [0.05, 0.2, 0.5, 1.2, 3.6, 10.0] {
        for gamma in [1e-4, 0.02, 0.1, 0.5, 0.9] {
            for &alpha in &orders {
                let got = numeric_poisson_rdp(alpha, sigma, gamma).unwrap();
                let want = binomial_rdp(alpha, sigma, gamma);
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs() + 1e-13,
                    "alpha={alpha} sigma={sigma} gamma={gamma}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn order_two_value_matches_monte_carlo() {
    let (sigma, gamma) = (1.2, 0.02);
    let got = numeric_poisson_rdp(2, sigma, gamma).unwrap();
    assert!(
        (got - 4.009_58e-4).abs() < 1e-9,
        "pinned value drifted: {got}"
    );

    let mut rng = stream_rng(98, 0);
    let n = 10_000_000u64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let ratio = 1.0 - gamma + gamma * ((2.0 * sigma * z - 1.0) / (2.0 * sigma * sigma)).exp();
        let v = ratio * ratio;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let mc = mean.ln();
    assert!(
        (got - mc).abs() <= 4.0 * se / mean,
        "numeric {got} vs MC {mc} (se {})",
        se / mean
    );
}

#[test]
fn composed_epsilon_matches_brute_force_sweep() {
    let (sigma, delta): (f64, f64) = (1.2, 1e-5);
    let cfg = AccountantConfig::new(50_000, 1_000, 5_000).unwrap();
    let gamma = cfg.sampling_ratio();
    let t = cfg.steps as f64;

    let brute = (2..=MAX_ORDER)
        .map(|a| t * binomial_rdp(a, sigma, gamma) + (1.0 / delta).ln() / f64::from(a - 1))
        .fold(f64::INFINITY, f64::min);
    let got = epsilon(Accountant::NumericPoisson, sigma, &cfg, delta).unwrap();
    assert!(
        (got.eps - brute).abs() <= 1e-6 * brute,
        "{} vs {brute}",
        got.eps
    );
    // σ = 1.2 is the calibration target for ε = 8 at this sampling rate
    assert!((got.eps - 8.0).abs() < 0.15, "eps = {}", got.eps);

    // closed form: dense scalar sweep over real orders inside the valid region
    let top = ((sigma * sigma / 2.0) * (1.0 / gamma).ln()).min(f64::from(MAX_ORDER));
    let dense = (0..200_000)
        .map(|i| 1.0 + (top - 1.0) * (i as f64 + 1.0) / 200_000.0)
        .map(|a| 7.0 * gamma * gamma * a * t / (sigma * sigma) + (1.0 / delta).ln() / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    let closed = epsilon(Accountant::ClosedForm, sigma, &cfg, delta).unwrap();
    assert!(
        closed.eps >= dense - 1e-9 && closed.eps <= dense * 1.02,
        "{} vs {dense}",
        closed.eps
    );
    assert!(closed.eps > got.eps);
}

#[test]
fn doubling_steps_scales_sigma_by_sqrt_two() {
    let budget = PrivacyBudget::new(8.0, 1e-5).unwrap();
    let a = calibrate(
        Accountant::ClosedForm,
        &budget,
        &AccountantConfig::new(50_000, 1_000, 5_000).unwrap(),
    )
    .unwrap();
    let b = calibrate(
        Accountant::ClosedForm,
        &budget,
        &AccountantConfig::new(50_000, 1_000, 10_000).unwrap(),
    )
    .unwrap();
    let ratio = b.sigma / a.sigma;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.05, "ratio {ratio}");
}

fn central_difference(f: &dyn Objective, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f.value(&up) - f.value(&down)) / (2.0 * h)
        })
        .collect()
}

fn objectives() -> Vec<(&'static str, Box<dyn Objective>)> {
    vec![
        ("cosh", Box::new(make_cosh_objective(6).unwrap())),
        (
            "quadratic",
            Box::new(make_quadratic_objective(6, 30.0).unwrap()),
        ),
        (
            "logistic",
            Box::new(make_logistic_objective(200, 6, 4).unwrap()),
        ),
    ]
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = stream_rng(7, 0);
    for (name, f) in objectives() {
        for _ in 0..100 {
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = f.grad(&x);
            let fd = central_difference(f.as_ref(), &x, 1e-5);
            let err = norm(&sub(&g, &fd)) / norm(&g).max(1e-3);
            assert!(err < 1e-6, "{name} at {x:?}: relative error {err}");
        }
    }
}

#[test]
fn finite_sum_gradient_is_mean_of_samples() {
    let f = make_logistic_objective(500, 8, 11).unwrap();
    let mut rng = stream_rng(8, 0);
    for _ in 0..100 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut mean = vec![0.0; 8];
        for i in 0..f.n_terms() {
            let gi = f.per_sample_grad(&x, i).unwrap();
            mean.iter_mut()
                .zip(&gi)
                .for_each(|(m, v)| *m += v / f.n_terms() as f64);
        }
        let g = f.grad(&x);
        assert!(norm(&sub(&g, &mean)) <= 1e-10 * norm(&g).max(1e-12));
    }
}

#[test]
fn per_sample_gradients_match_finite_differences() {
    let f = make_logistic_objective(50, 5, 3).unwrap();
    let mut rng = stream_rng(9, 0);
    let data = f.data();
    for i in 0..f.n_terms() {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = &data.features[i];
        let y = if data.labels[i] == 1 { 1.0 } else { -1.0 };
        let loss = |w: &[f64]| {
            let m = y * w.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
            (-m).exp().ln_1p()
                + 0.5 * dpopt::oracle::LOGISTIC_L2 * w.iter().map(|v| v * v).sum::<f64>()
        };
        let fd: Vec<f64> = (0..5)
            .map(|j| {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[j] += 1e-5;
                down[j] -= 1e-5;
                (loss(&up) - loss(&down)) / 2e-5
            })
            .collect();
        let g = f.per_sample_grad(&x, i).unwrap();
        assert!(
            norm(&sub(&g, &fd)) / norm(&g).max(1e-3) < 1e-6,
            "sample {i}"
        );
    }
}

#[test]
fn cosh_local_generalized_smoothness() {
    let f = make_cosh_objective(10).unwrap();
    let sp = f.smoothness();
    let mut rng = stream_rng(10, 0);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let step: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = rng.random_range(0.0..0.1);
        let y: Vec<f64> = x
            .iter()
            .zip(&step)
            .map(|(a, b)| a + len * b / norm(&step))
            .collect();
        let lhs = norm(&sub(&f.grad(&x), &f.grad(&y)));
        let rhs = (sp.l0 + sp.l1 * norm(&f.grad(&x))) * norm(&sub(&x, &y));
        // e^{0.1} covers the growth of cosh across a step of length 0.1
        assert!(lhs <= rhs * 0.1f64.exp() + 1e-12, "{lhs} > {rhs}");
    }
}

#[test]
fn objectives_stay_above_lower_bound() {
    let mut rng = stream_rng(12, 0);
    for (name, f) in objectives() {
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!(f.value(&x) >= f.f_star_lower_bound(), "{name}");
        }
    }
}

#[test]
fn sample_batch_is_uniform() {
    let (n, b, draws) = (10usize, 3usize, 100_000usize);
    let mut rng = stream_rng(13, 0);
    let mut counts = vec![0u64; n];
    for _ in 0..draws {
        let idx = sample_batch(n, b, &mut rng).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), b);
        for i in idx {
            counts[i] += 1;
        }
    }
    let p = b as f64 / n as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    for &c in &counts {
        assert!(
            (c as f64 / draws as f64 - p).abs() <= 3.0 * se,
            "{counts:?}"
        );
    }
    // 9 degrees of freedom, 0.999 quantile 27.88
    let expected = p * draws as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn toy_sign_change_and_monte_carlo() {
    let eval = |s: f64| toy_a_closed_form(&ToyParams::new(1.0, 1.0, 1.0, s).unwrap()).unwrap();
    assert!(eval(0.1) < 0.0);
    assert!(eval(0.45) > 0.0);
    let (mut lo, mut hi) = (0.1, 0.45);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    assert!(lo > 0.1 && hi < 0.5 && eval(lo) * eval(hi) <= 0.0);

    let p = ToyParams::new(1.0, 1.0, 1.0, 0.1).unwrap();
    let (est, se) = toy_a_monte_carlo(&p, 1_000_000, &mut stream_rng(14, 0)).unwrap();
    assert!((est - toy_a_closed_form(&p).unwrap()).abs() <= 4.0 * se);
}

#[test]
fn clipping_bias_shrinks_with_threshold() {
    let f = make_logistic_objective(2_000, 20, 0).unwrap();
    let mut rng = stream_rng(16, 0);
    let mut points = vec![vec![0.0; 20]];
    points.extend((0..6).map(|_| gaussian_point(20, 1.0, &mut rng)));
    for x in points {
        let biases: Vec<f64> = [0.1, 0.4, 1.6, 6.4]
            .iter()
            .map(|&c| {
                expected_direction(&f, &x, DirectionMode::Clip(c))
                    .unwrap()
                    .bias_norm
            })
            .collect();
        assert!(biases.windows(2).all(|w| w[1] <= w[0]), "{biases:?}");
    }
}

#[test]
fn small_gradient_clipping_is_inactive() {
    let f = make_cosh_objective(4).unwrap();
    let noise = NoiseModel::two_point(0.5).unwrap();
    let x = vec![0.2f64.asinh(), 0.0, 0.0, 0.0];
    let rep =
        first_order_check_sgd(&f, &noise, &x, 2.0, 0.1, 20_000, &mut stream_rng(15, 0)).unwrap();
    assert!(rep.all_unscaled);
    assert!(rep.passes());
}
