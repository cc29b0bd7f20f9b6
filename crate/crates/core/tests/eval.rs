mod common;

use proptest::prelude::*;
use snerf::eval::*;
use snerf::field::FieldNetworkConfig;
use snerf::Error;

#[test]
fn nll_matches_hand_computation() {
    let mean = [[0.5, 0.2, 0.9]];
    let var = [[0.04, 0.01, 1e-9]];
    let truth = [[0.7, 0.2, 0.9]];
    let (per, avg) = nll_metric(&mean, &var, &truth).unwrap();
    let h = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let expected = ((0.5 * 0.04 / 0.04 + 0.5 * 0.04f64.ln() + h)
        + (0.5 * 0.01f64.ln() + h)
        + (0.5 * VARIANCE_FLOOR.ln() + h))
        / 3.0;
    assert!((per[0] - expected).abs() < 1e-12);
    assert_eq!(avg, per[0]);
    assert!((floor_fraction(&var) - 1.0 / 3.0).abs() < 1e-15);
    assert!(nll_metric(&mean, &var, &[]).is_err());
    assert!(nll_metric(&[], &[], &[]).is_err());
}

#[test]
fn correlation_edge_cases() {
    assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    assert_eq!(pearson(&[1.0], &[1.0]), None);
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[9.0, 4.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    // ties get the average rank
    let s = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((s - 0.948_683_298_050_513_8).abs() < 1e-12, "{s}");
}

#[test]
fn unobserved_statistic_partitions_by_plane() {
    let plane = [1.0, 0.0, 0.0, 0.0];
    let pts = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-3.0, 1.0, 0.0]];
    let r = unobserved_region_statistic(&[4.0, 2.0, 1.0, 0.5], &pts, plane).unwrap();
    assert!((r - 3.0 / 0.75).abs() < 1e-12);
    let flat = unobserved_region_statistic(&[0.3; 4], &pts, plane).unwrap();
    assert!((flat - 1.0).abs() < 1e-12);
    assert!(unobserved_region_statistic(&[1.0, 1.0], &pts[..2], plane).is_err());
    assert!(unobserved_region_statistic(&[1.0], &pts, plane).is_err());
}

#[test]
fn baselines_need_at_least_two_draws() {
    let b = BaselineConfig { ensemble_size: 1, ..BaselineConfig::default() };
    assert!(matches!(b.validate(MethodId::DeepEnsemble), Err(Error::InvalidArgument(_))));
    assert!(b.validate(MethodId::Snerf).is_ok());
    let b = BaselineConfig { dropout_passes: 1, ..BaselineConfig::default() };
    assert!(b.validate(MethodId::McDropout).is_err());
    let b = BaselineConfig { dropout_rate: 1.0, ..BaselineConfig::default() };
    assert!(b.validate(MethodId::McDropout).is_err());
}

#[test]
fn method_names_round_trip() {
    for m in MethodId::ALL {
        assert_eq!(m.as_str().parse::<MethodId>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, format!("\"{m}\""));
    }
    assert!("nerf".parse::<MethodId>().is_err());
}

fn tiny_eval_config() -> EvalConfig {
    let mut cfg = EvalConfig::default();
    cfg.network = FieldNetworkConfig { width: 8, ..common::tiny_network() };
    cfg.train = common::tiny_train_config();
    cfg.train.steps = 3;
    cfg.baseline = BaselineConfig { ensemble_size: 2, dropout_passes: 2, dropout_rate: 0.2 };
    cfg.max_test_views = 1;
    cfg.chunk_rays = 16;
    cfg
}

#[test]
fn every_method_produces_a_finite_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::small_dataset(dir.path(), "sphere", 6, 6);
    let cfg = tiny_eval_config();
    let results = run_sweep(&MethodId::ALL, &ds, &cfg);
    let mut evals = Vec::new();
    for (m, r) in results {
        let e = r.unwrap_or_else(|err| panic!("{m}: {err}"));
        assert_eq!(e.report.method, m);
        assert!(e.report.nll.is_finite());
        assert_eq!(e.report.pixel_count, 36);
        assert_eq!(e.report.test_views.len(), 1);
        assert!(e.report.unobserved_variance_ratio.is_none());
        assert!(e.views[0].variance.iter().all(|v| *v >= 0.0 && v.is_finite()));
        evals.push(e);
    }
    let reports: Vec<MetricReport> = evals.iter().map(|e| e.report.clone()).collect();
    let path = dir.path().join("report.json");
    write_reports_json(&path, &reports).unwrap();
    assert_eq!(read_reports_json(&path).unwrap(), reports);
    let sheet = dir.path().join("sheet.png");
    write_contact_sheet(&sheet, &evals.iter().collect::<Vec<_>>()).unwrap();
    let img = snerf::render::read_png_rgb(&sheet).unwrap();
    assert_eq!((img.width, img.height), (6 * 6, 3 * 6));
}

#[test]
fn evaluation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::small_dataset(dir.path(), "slab", 6, 5);
    let cfg = tiny_eval_config();
    let (_, a) = run_method(MethodId::Snerf, &ds, &cfg).unwrap();
    let (_, b) = run_method(MethodId::Snerf, &ds, &cfg).unwrap();
    assert_eq!(a.views, b.views);
    assert_eq!(a.report.nll.to_bits(), b.report.nll.to_bits());
    assert_eq!(a.report.correlation, b.report.correlation);
}

#[test]
fn partitioned_scene_reports_the_unobserved_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::small_dataset(dir.path(), "hemisphere", 25, 6);
    let mut cfg = tiny_eval_config();
    cfg.max_test_views = 4;
    let (_, e) = run_method(MethodId::SnerfWoKl, &ds, &cfg).unwrap();
    let r = e.report.unobserved_variance_ratio.expect("hemisphere has a partition");
    assert!(r.is_finite() && r > 0.0);
}

#[test]
fn trained_methods_round_trip_through_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::small_dataset(dir.path(), "slab", 4, 4);
    let cfg = tiny_eval_config();
    let data = ds.triplets(&[0, 1]).unwrap();
    let bounds = ds.manifest.scene_bounds().unwrap();
    for m in [MethodId::Snerf, MethodId::DeepEnsemble] {
        let t = train_method(m, &data, &bounds, &cfg).unwrap();
        let back = TrainedMethod::from_params(m, cfg.network_config(m), t.to_params()).unwrap();
        assert_eq!(back.to_params().flat_values(), t.to_params().flat_values());
        assert_eq!(back.members.len(), t.members.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..40),
        a in 0.1..10.0f64, b in -3.0..3.0f64, c in 0.1..10.0f64, d in -3.0..3.0f64,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        if let Some(r) = pearson(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let y2: Vec<f64> = y.iter().map(|v| -c * v + d).collect();
            let r2 = pearson(&x2, &y2).unwrap();
            prop_assert!((r + r2).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn spearman_ignores_monotone_maps(xs in prop::collection::vec((0.01..5.0f64, -5.0..5.0f64), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let y2: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            prop_assert!((spearman(&x2, &y2).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_is_minimized_at_the_truth(m in 0.0..1.0f64, g in 0.0..1.0f64, v in 1e-4..1.0f64) {
        let at = |mean: f64| nll_metric(&[[mean; 3]], &[[v; 3]], &[[g; 3]]).unwrap().1;
        prop_assert!(at(g) <= at(m) + 1e-12);
    }
}
