use nalgebra::DVector;

use rpchoice::criterion::DotForm;
use rpchoice::seed;
use rpchoice::simulate::{
    compute_shares_mc, draw_covariates, logit_oracle_dataset, logit_shares, simulate_dataset, ErrorLaw, IidGumbel,
    MovingWindow, SimConfig,
};
use rpchoice::stats;
use rpchoice::{CriterionForm, CycleSet, Orientation, ParamPoint};

fn moments(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    (stats::variance(a), stats::variance(b), cov)
}

#[test]
fn moving_window_variance_and_neighbour_covariance() {
    let law = MovingWindow::default();
    let mut rng = seed::rng(11);
    let mut scratch = Vec::new();
    let mut out = [0.0; 2];
    let draws = 1_000_000;
    let (mut e0, mut e1) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        law.sample(&mut rng, &mut scratch, &mut out);
        e0.push(out[0]);
        e1.push(out[1]);
    }
    let (v0, v1, cov) = moments(&e0, &e1);
    // var = 4/9 with sd of the sample variance sqrt(2) * var / sqrt(N) for a Gaussian.
    let var = 4.0 / 9.0;
    let sd_var = 2f64.sqrt() * var / (draws as f64).sqrt();
    assert!((v0 - var).abs() < 3.0 * sd_var, "var {v0}");
    assert!((v1 - var).abs() < 3.0 * sd_var, "var {v1}");
    // Three shared innovations: cov = 3/9. sd of the product mean is
    // sqrt(var^2 + cov^2) / sqrt(N) for jointly Gaussian pairs.
    let c = 1.0 / 3.0;
    let sd_cov = (var * var + c * c).sqrt() / (draws as f64).sqrt();
    assert!((cov - c).abs() < 3.0 * sd_cov, "cov {cov}");
}

#[test]
fn iid_covariate_means() {
    let mut config = SimConfig::new(100_000, 5);
    config.n = 2;
    let x = draw_covariates(&config).unwrap();
    let col1: Vec<f64> = x[0].column(0).iter().copied().collect();
    let col2: Vec<f64> = x[0].column(1).iter().copied().collect();
    let band = 3.0 / (col1.len() as f64).sqrt();
    assert!((stats::mean(&col1) - 1.0).abs() < band);
    assert!((stats::mean(&col2) + 1.0).abs() < band);
    assert!((stats::variance(&col1) - 1.0).abs() < 0.02);
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb, cov) = moments(a, b);
    cov / (va * vb).sqrt()
}

#[test]
fn brand_effects_correlate_markets_at_fixed_choice() {
    let mut config = SimConfig::new(100_000, 6);
    config.n = 2;
    config.covariate_mode = "brand-effects".into();
    let x = draw_covariates(&config).unwrap();
    let a: Vec<f64> = x[0].column(0).iter().copied().collect();
    let b: Vec<f64> = x[1].column(0).iter().copied().collect();
    // 0.5 / (0.5 + 1); the sd of a sample correlation is about (1 - rho^2) / sqrt(N).
    let rho = 1.0 / 3.0;
    let sd = (1.0 - rho * rho) / (a.len() as f64).sqrt();
    let r = correlation(&a, &b);
    assert!((r - rho).abs() < 4.0 * sd, "corr {r}");
    assert!((stats::mean(&a) - 1.0).abs() < 0.02);
}

#[test]
fn market_effects_correlate_choices_within_a_market() {
    let mut config = SimConfig::new(2, 7);
    config.n = 100_000;
    config.covariate_mode = "market-effects".into();
    let x = draw_covariates(&config).unwrap();
    let a: Vec<f64> = x.iter().map(|m| m[(0, 1)]).collect();
    let b: Vec<f64> = x.iter().map(|m| m[(1, 1)]).collect();
    let rho = 1.0 / 3.0;
    let sd = (1.0 - rho * rho) / (a.len() as f64).sqrt();
    let r = correlation(&a, &b);
    assert!((r - rho).abs() < 4.0 * sd, "corr {r}");
    assert!((stats::mean(&a) + 1.0).abs() < 0.02);
}

#[test]
fn covariates_are_deterministic_in_the_seed() {
    let config = SimConfig::new(50, 9);
    assert_eq!(draw_covariates(&config).unwrap(), draw_covariates(&config).unwrap());
    let other = SimConfig::new(50, 10);
    assert_ne!(draw_covariates(&config).unwrap(), draw_covariates(&other).unwrap());
}

fn within_mc_error(p: &DVector<f64>, truth: &[f64], draws: usize) {
    for (j, (a, b)) in p.iter().zip(truth).enumerate() {
        let sd = (b * (1.0 - b) / draws as f64).sqrt();
        assert!((a - b).abs() <= 3.0 * sd.max(1e-12), "share {j}: {a} vs {b} (sd {sd})");
    }
}

#[test]
fn symmetric_utilities_split_evenly() {
    let draws = 100_000;
    let p = compute_shares_mc(&[0.3, 0.3], &MovingWindow::default(), draws, 12).unwrap();
    within_mc_error(&p, &[0.5, 0.5], draws);
}

#[test]
fn gumbel_errors_reproduce_logit_shares() {
    let u = [0.5, -0.2, 1.1, 0.0, -1.5];
    let draws = 200_000;
    let p = compute_shares_mc(&u, &IidGumbel, draws, 13).unwrap();
    let exact = logit_shares(&u);
    within_mc_error(&p, exact.as_slice(), draws);
}

#[test]
fn mc_shares_are_a_distribution() {
    let u: Vec<f64> = (0..40).map(|j| (j as f64 * 0.37).sin()).collect();
    for law in [&MovingWindow::default() as &dyn ErrorLaw, &IidGumbel] {
        let p = compute_shares_mc(&u, law, 5_000, 14).unwrap();
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((stats::neumaier_sum(p.iter().copied()) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ties_go_to_the_lowest_index() {
    struct NoNoise;
    impl ErrorLaw for NoNoise {
        fn name(&self) -> &'static str {
            "none"
        }
        fn sample(&self, _: &mut rand_chacha::ChaCha8Rng, _: &mut Vec<f64>, out: &mut [f64]) {
            out.fill(0.0);
        }
    }
    let p = compute_shares_mc(&[1.0, 2.0, 2.0], &NoNoise, 1000, 0).unwrap();
    assert_eq!(p.as_slice(), &[0.0, 1.0, 0.0]);
}

#[test]
fn simulated_dataset_is_reproducible() {
    let mut config = SimConfig::new(20, 15);
    config.n = 4;
    config.mc_draws = 2_000;
    let a = simulate_dataset(&config).unwrap();
    let b = simulate_dataset(&config).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.n(), a.d(), a.b()), (4, 20, 2));
    config.error = rpchoice::simulate::ErrorSpec::iid_gumbel();
    assert_ne!(simulate_dataset(&config).unwrap(), a);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = SimConfig::new(10, 0);
    config.mc_draws = 999;
    assert!(simulate_dataset(&config).is_err());
    let mut config = SimConfig::new(1, 0);
    assert!(simulate_dataset(&config).is_err());
    config.d = 10;
    config.covariate_mode = "nope".into();
    assert!(simulate_dataset(&config).is_err());
}

#[test]
fn logit_oracle_zero_at_truth_for_every_cycle_length() {
    for b in [2, 3] {
        let beta = ParamPoint::normalized(DVector::from_fn(b, |i, _| 1.0 + i as f64)).unwrap().into_vector();
        let data = logit_oracle_dataset(7, 5, b, &beta, 16).unwrap();
        let cycles = CycleSet::enumerate(7, &[2, 3, 4], Orientation::Both).unwrap();
        let q = DotForm.bind(&data, &cycles).unwrap();
        assert!(q.value(&beta) < 1e-18, "b={b}: {}", q.value(&beta));
        assert!(q.residuals(&beta).iter().all(|r| *r <= 1e-15));
        assert!(q.value(&-&beta) > 0.0);
    }
}
