mod common;

use proptest::prelude::*;
use rand::Rng;
use snerf::autodiff::{Tape, Tensor};
use snerf::dist::*;
use snerf::rng::stream;

#[test]
fn pdfs_integrate_to_one() {
    let mut rng = stream(3, "pdf-params", 0);
    for _ in 0..20 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.3..2.0);
        let ln = common::logistic_normal_mass(mu, sigma);
        let rn = common::rectified_normal_mass(mu, sigma);
        assert!((ln - 1.0).abs() < 1e-6, "logistic-normal mu={mu} sigma={sigma}: {ln}");
        assert!((rn - 1.0).abs() < 1e-6, "rectified-normal mu={mu} sigma={sigma}: {rn}");
    }
}

#[test]
fn zero_mass_matches_cdf() {
    let n = 100_000;
    for (mu, sigma) in [(0.3, 1.0), (-0.5, 0.4), (1.2, 2.0)] {
        let tape = Tape::new();
        let eps = tape.constant(NoiseDraw::standard_normal(&[1, n], 9, 0).to_tensor());
        let a = sample_density_var(tape.scalar(mu), tape.scalar(sigma), eps);
        let zeros = a.value().data().iter().filter(|&&x| x == 0.0).count() as f64;
        let p = rectified_normal_cdf_at_zero(mu, sigma).unwrap();
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((zeros - n as f64 * p).abs() <= 3.0 * sd, "mu={mu}: {zeros} vs {}", n as f64 * p);
    }
}

#[test]
fn logistic_normal_kl_matches_closed_form() {
    let q = LogisticNormalParams::new([0.5, -1.0, 2.0], [0.8, 1.5, 0.3]).unwrap();
    let p = LogisticNormalParams::new([0.0, 0.0, 1.0], [1.0, 2.0, 1.0]).unwrap();
    let exact: f64 = (0..3).map(|c| common::gaussian_kl(q.mu[c], q.sigma[c], p.mu[c], p.sigma[c])).sum();
    let est = kl_logistic_normal(&q, &p, 100_000, &mut stream(1, "kl", 0)).unwrap();
    assert!((est.value - exact).abs() / exact < 0.02, "{est:?} vs {exact}");
}

#[test]
fn rectified_normal_kl_matches_quadrature() {
    for (q, p) in [((0.5, 1.0), (0.0, 10.0)), ((1.5, 0.5), (0.2, 1.0)), ((-0.3, 0.7), (0.4, 0.6))] {
        let oracle = common::rectified_kl_quadrature(q.0, q.1, p.0, p.1);
        let est = kl_rectified_normal(
            &RectifiedNormalParams::new(q.0, q.1).unwrap(),
            &RectifiedNormalParams::new(p.0, p.1).unwrap(),
            100_000,
            &mut stream(2, "kl", 0),
        )
        .unwrap();
        assert!((est.value - oracle).abs() / oracle < 0.02, "{q:?} {p:?}: {est:?} vs {oracle}");
    }
}

#[test]
fn quadrature_oracle_agrees_with_gaussian_limit() {
    // far from zero the rectification is invisible
    let exact = common::gaussian_kl(20.0, 1.0, 19.0, 2.0);
    assert!((common::rectified_kl_quadrature(20.0, 1.0, 19.0, 2.0) - exact).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn radiance_samples_in_open_unit_interval(mu in -5.0..5.0f64, sigma in 0.01..3.0f64, e in -4.0..4.0f64) {
        let p = LogisticNormalParams::uniform(mu, sigma).unwrap();
        let r = sample_radiance(&p, &NoiseDraw::fixed(&[3], vec![e; 3]).unwrap()).unwrap();
        prop_assert!(r.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn density_samples_nonnegative(mu in -5.0..5.0f64, sigma in 0.01..3.0f64, e in -4.0..4.0f64) {
        let p = RectifiedNormalParams::new(mu, sigma).unwrap();
        let a = sample_density(&p, &NoiseDraw::fixed(&[1], vec![e]).unwrap()).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, (mu + e * sigma).max(0.0));
    }

    #[test]
    fn kl_of_identical_radiance_is_exactly_zero(mu in -3.0..3.0f64, sigma in 0.05..3.0f64) {
        // the per-sample log ratio cancels term by term
        let q = LogisticNormalParams::uniform(mu, sigma).unwrap();
        let est = kl_logistic_normal(&q, &q, 16, &mut stream(0, "kl", 0)).unwrap();
        prop_assert!(est.value.abs() < 1e-9);
    }

    #[test]
    fn reparameterized_gradient_of_radiance(mu in -3.0..3.0f64, sigma in 0.05..2.0f64, e in -3.0..3.0f64) {
        let tape = Tape::new();
        let m = tape.constant(Tensor::scalar(mu));
        let s = tape.constant(Tensor::scalar(sigma));
        let r = sample_radiance_var(m, s, tape.scalar(e));
        let g = tape.gradients(r.sum()).unwrap();
        let v = r.item();
        let dmu = Tape::grad_of(&g, m).unwrap().item();
        let dsigma = Tape::grad_of(&g, s).unwrap().item();
        prop_assert!((dmu - v * (1.0 - v)).abs() < 1e-12);
        prop_assert!((dsigma - e * v * (1.0 - v)).abs() < 1e-12);
    }
}
