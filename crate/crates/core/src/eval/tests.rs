use super::*;
use crate::flow::Standardization;
use crate::nn::MlpNet;
use crate::sde::{problem_catalog, CatalogParams};

fn normal_pdf(x: f64, mu: f64) -> f64 {
    (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * PI).sqrt()
}

/// Linear blocks that copy `xt` (resp. `zt`), so `x̂t = zt ~ N(0, I)`.
fn identity_model(d: usize) -> PrnfModel {
    let net = || {
        let mut p = vec![0.0; 2 * d * d + d];
        for i in 0..d {
            p[i * 2 * d + d + i] = 1.0;
        }
        MlpNet::from_params(&[2 * d, d], p).unwrap()
    };
    PrnfModel::new(net(), net(), Standardization::identity(d)).unwrap()
}

#[test]
fn constant_integrand_gives_one_without_error() {
    let m = identity_model(1);
    let p0 = InitialDistribution::test_1d("bar").unwrap();
    let e = qoi_estimate(&m, &p0, &QoiSpec { integrand: Integrand::One, m: 50, n: 20 }, 3).unwrap();
    assert_eq!(e.value, 1.0);
    assert_eq!(e.std_error, 0.0);
}

#[test]
fn estimate_groups() {
    let e = estimate_from_values(&[1.0, 3.0, 5.0, 7.0], 2, 2);
    assert_eq!(e.value, 4.0);
    // group means 2 and 6: sd 2√2, se 2
    assert!((e.std_error - 2.0).abs() < 1e-12);
    let single = estimate_from_values(&[2.5], 1, 1);
    assert_eq!((single.value, single.std_error), (2.5, 0.0));
}

#[test]
fn indicator_of_everything_and_nothing() {
    let m = identity_model(3);
    let p0 = InitialDistribution::abc_cloud(PI, 2.5 * PI);
    let all = Region { lower: vec![f64::NEG_INFINITY; 3], upper: vec![f64::INFINITY; 3] };
    assert_eq!(target_density(&m, PI, 2.5 * PI, &all, 500, 1).unwrap(), 1.0);
    let empty = Region { lower: vec![0.0, 0.0, 1.0], upper: vec![0.0, 1.0, 2.0] };
    assert_eq!(target_density(&m, PI, 2.5 * PI, &empty, 500, 1).unwrap(), 0.0);
    let spec = QoiSpec { integrand: Integrand::Indicator { region: all }, m: 10, n: 10 };
    assert_eq!(qoi_estimate(&m, &p0, &spec, 2).unwrap().value, 1.0);
}

#[test]
fn qoi_is_linear_on_common_samples() {
    let m = identity_model(2);
    let p0 = InitialDistribution::Uniform { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] };
    let s = flow_samples(&m, &p0, 30, 10, 9).unwrap();
    let f = |x: &[f64]| x[0];
    let g = |x: &[f64]| x[1] * x[1];
    let a = 2.0;
    let b = -3.0;
    let mean = |h: &dyn Fn(&[f64]) -> f64| s.chunks(2).map(h).sum::<f64>() / 300.0;
    let combined = mean(&|x| a * f(x) + b * g(x));
    assert!((combined - (a * mean(&f) + b * mean(&g))).abs() < 1e-12);
    let e = qoi_estimate(&m, &p0, &QoiSpec { integrand: Integrand::Coordinate { index: 0 }, m: 30, n: 10 }, 9).unwrap();
    assert!((e.value - mean(&f)).abs() < 1e-12);
}

#[test]
fn kl_of_shifted_gaussians() {
    let grid = uniform_grid(-12.0, 12.0, 4001);
    let r = kl_between(|x| normal_pdf(x, 0.0), |x| normal_pdf(x, 0.5), &grid);
    assert!((r.kl - 0.125).abs() < 1e-3, "{}", r.kl);
    assert_eq!(r.clipped, 0);
}

#[test]
fn kl_clips_vanishing_q() {
    let grid = uniform_grid(-1.0, 1.0, 11);
    let r = kl_between(|_| 0.5, |x| if x > 0.0 { 0.5 } else { 0.0 }, &grid);
    assert_eq!(r.clipped, 6);
    assert!(r.kl.is_finite());
}

#[test]
fn kl_of_kde_from_exact_samples_is_small() {
    let m = identity_model(1);
    let s = m.sample_conditional(&[0.0], 100_000, 4).unwrap();
    let r = kl_divergence_1d(|x| normal_pdf(x, 0.0), &s, &uniform_grid(-8.0, 8.0, 1601)).unwrap();
    assert!(r.kl >= -1e-6 && r.kl < 0.01, "{}", r.kl);
}

#[test]
fn marginal_kl_of_identical_sets_is_zero() {
    let m = identity_model(2);
    let s = m.sample_conditional(&[0.0, 0.0], 2000, 4).unwrap();
    let r = marginal_kl(&s, &s, 2, &[0, 1]).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|k| k.kl.abs() < 0.01));
    assert!(marginal_kl(&s, &s, 2, &[]).unwrap().is_empty());
    assert!(marginal_kl(&s, &s, 2, &[2]).is_err());
}

#[test]
fn marginal_kl_separates_shift_from_sampling_noise() {
    let m = identity_model(1);
    let a = m.sample_conditional(&[0.0], 20_000, 1).unwrap();
    let b = m.sample_conditional(&[0.0], 20_000, 2).unwrap();
    let shifted: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
    let same = marginal_kl(&a, &b, 1, &[0]).unwrap()[0].kl;
    let apart = marginal_kl(&a, &shifted, 1, &[0]).unwrap()[0].kl;
    assert!(same.abs() < 5e-3, "{same}");
    // 0.125 for the full line, less the two 0.1% tails
    assert!((apart - 0.125).abs() < 0.02, "{apart}");
}

#[test]
fn fraction_above_edges() {
    let s = [0.5, 0.0, 1.0, 0.0, 2.0, 0.0, 9.0, 0.0];
    assert_eq!(fraction_above(&s, 2, 0, 5.0, 0.5, 5.0), 0.0);
    assert_eq!(fraction_above(&s, 2, 0, 0.5, 0.5, 5.0), 1.0);
    assert_eq!(fraction_above(&s, 2, 0, 1.5, 0.5, 5.0), 0.5);
    // clamping keeps the out-of-range 9.0 above any interior threshold
    assert_eq!(fraction_above(&s, 2, 0, 4.9, 0.5, 5.0), 0.25);
}

#[test]
fn marginal_quadrature_normalizes() {
    for name in TEST_1D {
        let p0 = InitialDistribution::test_1d(name).unwrap();
        if matches!(p0, InitialDistribution::Delta { .. }) {
            continue;
        }
        let total = gauss_legendre(|x| sqrt1d_marginal_density(&p0, x, 0.1).unwrap(), 0.0, 12.0, 200);
        assert!((total - 1.0).abs() < 1e-4, "{name}: {total}");
    }
}

#[test]
fn mc_reference_matches_quadrature_mean() {
    let problem = problem_catalog("sqrt1d", &CatalogParams::default()).unwrap();
    let p0 = InitialDistribution::test_1d("bar").unwrap();
    let cfg = IntegratorConfig::new(1e-3, 17);
    let one = mc_reference(&problem, &p0, &QoiSpec { integrand: Integrand::One, m: 20, n: 5 }, &cfg).unwrap();
    assert_eq!(one.value, 1.0);
    let spec = QoiSpec { integrand: Integrand::Coordinate { index: 0 }, m: 2000, n: 2 };
    let e = mc_reference(&problem, &p0, &spec, &cfg).unwrap();
    let exact = gauss_legendre(|x| x * sqrt1d_marginal_density(&p0, x, 0.1).unwrap(), 0.0, 12.0, 200);
    assert!((e.value - exact).abs() < 3.0 * e.std_error + 1e-3, "{} vs {exact} (se {})", e.value, e.std_error);
}

#[test]
fn zero_horizon_runaway_keeps_initial_law() {
    let problem = problem_catalog("runaway2d", &CatalogParams::default()).unwrap().with_horizon(0.0).unwrap();
    let p0 = InitialDistribution::maxwellian(1.0);
    let cfg = IntegratorConfig::new(1e-3, 5);
    let s = mc_samples(&problem, &p0, 400, 1, &cfg).unwrap();
    let x0 = p0.sample(400, rng::derive_seed(5, 1)).unwrap();
    assert_eq!(s, x0);
    let frac = runaway_fraction_mc(&problem, &p0, RUNAWAY_THRESHOLD, 400, &cfg).unwrap();
    assert_eq!(frac, fraction_above(&x0, 2, 0, RUNAWAY_THRESHOLD, 0.5, 5.0));
}

#[test]
fn dimension_mismatch_is_reported() {
    let m = identity_model(2);
    let p0 = InitialDistribution::test_1d("bar").unwrap();
    assert!(qoi_estimate(&m, &p0, &QoiSpec { integrand: Integrand::One, m: 1, n: 1 }, 0).is_err());
    assert!(qoi_estimate(&identity_model(1), &p0, &QoiSpec { integrand: Integrand::One, m: 0, n: 1 }, 0).is_err());
}

#[test]
fn linear10d_reference_at_time_zero_is_initial_law() {
    let p0 = InitialDistribution::normal_10d(Transform::Identity);
    let s = linear10d_reference(&p0, 20_000, 0.0, 3).unwrap();
    let x0 = p0.sample(20_000, rng::derive_seed(3, 1)).unwrap();
    assert_eq!(s, x0);
    assert!(linear10d_reference(&InitialDistribution::test_1d("bar").unwrap(), 10, 1.0, 0).is_err());
}
