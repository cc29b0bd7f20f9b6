//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Run with `cargo test --release --test acceptance`. The end-to-end criteria
//! train several toy models and take a few minutes on one core.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use snerf::autodiff::Tape;
use snerf::dist::*;
use snerf::eval::*;
use snerf::render::Integrator;
use snerf::rng::stream;
use snerf::scene::Dataset;
use snerf::train::AblationMode;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn autodiff() -> Outcome {
    let worst_net = (0..50)
        .map(|s| common::micro_net_check(s).max_rel_error)
        .fold(0.0, f64::max);
    let worst_loss = (0..3)
        .map(|s| common::full_loss_check(s, &common::tiny_train_config()).max_rel_error)
        .fold(0.0, f64::max);
    outcome(
        worst_net <= 1e-4 && worst_loss <= 1e-4,
        format!("max rel error {worst_net:.2e} over 50 micro-nets, {worst_loss:.2e} on the full loss (tol 1e-4)"),
    )
}

fn distributions() -> Outcome {
    let mut rng = stream(3, "pdf-params", 0);
    let mut mass_err: f64 = 0.0;
    for _ in 0..20 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.3..2.0);
        mass_err = mass_err
            .max((common::logistic_normal_mass(mu, sigma) - 1.0).abs())
            .max((common::rectified_normal_mass(mu, sigma) - 1.0).abs());
    }

    let n = 100_000;
    let mut zero_z: f64 = 0.0;
    for (i, (mu, sigma)) in [(0.3, 1.0), (-0.5, 0.4), (1.2, 2.0)].into_iter().enumerate() {
        let tape = Tape::new();
        let eps = tape.constant(NoiseDraw::standard_normal(&[1, n], 9, i as u64).to_tensor());
        let a = sample_density_var(tape.scalar(mu), tape.scalar(sigma), eps);
        let zeros = a.value().data().iter().filter(|&&x| x == 0.0).count() as f64;
        let p = rectified_normal_cdf_at_zero(mu, sigma).unwrap();
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        zero_z = zero_z.max((zeros - n as f64 * p).abs() / sd);
    }

    let q = LogisticNormalParams::new([0.5, -1.0, 2.0], [0.8, 1.5, 0.3]).unwrap();
    let p = LogisticNormalParams::new([0.0, 0.0, 1.0], [1.0, 2.0, 1.0]).unwrap();
    let exact: f64 = (0..3).map(|c| common::gaussian_kl(q.mu[c], q.sigma[c], p.mu[c], p.sigma[c])).sum();
    let est = kl_logistic_normal(&q, &p, n, &mut stream(1, "kl", 0)).unwrap();
    let mut kl_rel = (est.value - exact).abs() / exact;
    for (i, (q, p)) in [((0.5, 1.0), (0.0, 10.0)), ((1.5, 0.5), (0.2, 1.0)), ((-0.3, 0.7), (0.4, 0.6))]
        .into_iter()
        .enumerate()
    {
        let oracle = common::rectified_kl_quadrature(q.0, q.1, p.0, p.1);
        let est = kl_rectified_normal(
            &RectifiedNormalParams::new(q.0, q.1).unwrap(),
            &RectifiedNormalParams::new(p.0, p.1).unwrap(),
            n,
            &mut stream(2, "kl", i as u64),
        )
        .unwrap();
        kl_rel = kl_rel.max((est.value - oracle).abs() / oracle);
    }
    outcome(
        mass_err <= 1e-6 && zero_z <= 3.0 && kl_rel <= 0.02,
        format!(
            "pdf mass err {mass_err:.1e} (tol 1e-6), zero-mass {zero_z:.2} sd (tol 3), KL rel err {:.2}% (tol 2%)",
            kl_rel * 100.0
        ),
    )
}

fn renderer() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for integ in [Integrator::Trapezoidal, Integrator::Alpha] {
        let e = common::renderer_errors(128, integ);
        pass &= e.constant_color <= 1e-3
            && e.linear_transmittance <= 1e-3
            && e.linear_color <= 1e-3
            && e.constant_depth <= 2e-3;
        parts.push(format!(
            "{integ:?}: color {:.1e}, transmittance {:.1e}, depth {:.1e}",
            e.constant_color, e.linear_transmittance, e.constant_depth
        ));
    }
    let errs: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&n| common::renderer_errors(n, Integrator::Trapezoidal).constant_color)
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    pass &= ratios.iter().all(|r| (3.5..=4.5).contains(r));
    parts.push(format!("refinement ratios {ratios:.2?} (want ~4)"));
    outcome(pass, parts.join("; "))
}

fn metrics() -> Outcome {
    let g = [[0.25, 0.5, 0.75]];
    let (_, nll) = nll_metric(&g, &[[1.0; 3]], &g).unwrap();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let nll_err = (nll - half_ln_2pi).abs();
    let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
    let corr_err = (pearson(&x, &y).unwrap() - 1.0).abs();
    outcome(
        nll_err <= 1e-9 && corr_err <= 1e-12,
        format!("NLL err {nll_err:.1e} (tol 1e-9), affine correlation err {corr_err:.1e} (tol 1e-12)"),
    )
}

fn loss_drop(trained: &TrainedMethod) -> f64 {
    let log = &trained.logs[0];
    let first = log[0].loss.total;
    let tail = &log[log.len().saturating_sub(50)..];
    let tail_mean = tail.iter().map(|r| r.loss.total).sum::<f64>() / tail.len() as f64;
    (first - tail_mean) / first.abs()
}

fn correlation(e: &Evaluation) -> f64 {
    e.report.correlation.unwrap_or(f64::NAN)
}

fn seeded(seed: u64) -> EvalConfig {
    let mut cfg = EvalConfig::toy();
    cfg.train.seed = seed;
    cfg
}

fn end_to_end(sphere: &Dataset, slab_full: &(TrainedMethod, Evaluation)) -> Outcome {
    let (sphere_trained, sphere_eval) = run_method(MethodId::Snerf, sphere, &seeded(0)).unwrap();
    let drops = [loss_drop(&slab_full.0), loss_drop(&sphere_trained)];
    let corrs = [correlation(&slab_full.1), correlation(&sphere_eval)];
    let pass = drops.iter().all(|d| *d >= 0.3) && corrs.iter().all(|c| *c > 0.3);
    outcome(
        pass,
        format!(
            "loss drop slab {:.0}% sphere {:.0}% (need >= 30%); correlation slab {:.3} sphere {:.3} (need > 0.3)",
            drops[0] * 100.0,
            drops[1] * 100.0,
            corrs[0],
            corrs[1]
        ),
    )
}

fn unobserved(hemisphere: &Dataset) -> Outcome {
    let ratio = |m| {
        let (_, e) = run_method(m, hemisphere, &seeded(0)).unwrap();
        e.report.unobserved_variance_ratio.unwrap_or(f64::NAN)
    };
    let full = ratio(MethodId::Snerf);
    let without = ratio(MethodId::SnerfWoKl);
    outcome(
        full >= 3.0 && full > without,
        format!("unobserved/observed variance ratio full {full:.2} (need >= 3), w/o KL {without:.2} (need < full)"),
    )
}

fn ablation(slab: &Dataset, slab_full: &(TrainedMethod, Evaluation)) -> Outcome {
    let mut sums = [0.0; 3];
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let mut row = [0.0; 3];
        for (i, mode) in [AblationMode::Full, AblationMode::WithKl, AblationMode::WithoutKl].into_iter().enumerate() {
            let m = MethodId::from_ablation(mode);
            row[i] = if seed == 0 && m == MethodId::Snerf {
                correlation(&slab_full.1)
            } else {
                correlation(&run_method(m, slab, &seeded(seed)).unwrap().1)
            };
            sums[i] += row[i] / 3.0;
        }
        per_seed.push(row);
    }
    let [full, with_kl, without] = sums;
    outcome(
        full >= with_kl - 0.02 && with_kl >= without - 0.02,
        format!("mean correlation full {full:.3} >= w/ KL {with_kl:.3} >= w/o KL {without:.3} (ties 0.02); per seed {per_seed:.3?}"),
    )
}

fn timing(slab: &Dataset) -> Outcome {
    // render cost does not depend on the weights, so untrained members suffice
    let mut cfg = EvalConfig::toy();
    cfg.train.steps = 0;
    cfg.max_test_views = 1;
    let seconds = |m| {
        let (_, e) = run_method(m, slab, &cfg).unwrap();
        e.report.render_seconds_per_view
    };
    let snerf = seconds(MethodId::Snerf);
    let ensemble = seconds(MethodId::DeepEnsemble);
    let dropout = seconds(MethodId::McDropout);
    outcome(
        snerf < ensemble && snerf < dropout,
        format!("s/view at N=64, 64x64: S-NeRF K=16 {snerf:.2}, 5-member ensemble {ensemble:.2}, 5-pass dropout {dropout:.2} (untrained weights)"),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["snerf"];
    argv.extend_from_slice(args);
    snerf::cli::run(argv)
}

fn loss_columns(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string())
        .collect()
}

fn report_without_timing(path: &Path) -> Vec<MetricReport> {
    let mut r = read_reports_json(path).unwrap();
    for x in &mut r {
        x.render_seconds_per_view = 0.0;
        x.train_seconds = 0.0;
    }
    r
}

fn reproducibility(root: &Path) -> Outcome {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let scene = root.join("repro_scene");
    let small = [
        "--preset", "toy", "--set", "views=8", "--set", "image_width=16", "--set", "image_height=16",
        "--set", "max_test_views=1", "--seed", "11",
    ];
    let with = |cmd: &str, extra: &[String]| {
        let mut a: Vec<String> = vec![cmd.into()];
        a.extend(small.iter().map(|x| x.to_string()));
        a.extend_from_slice(extra);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        cli(&refs)
    };
    let rerun = |cmd: &str, from: &Path, out: &Path| {
        cli(&[cmd, "--config", &s(&from.join("config.resolved")), "--out", &s(out)])
    };
    let mut codes = Vec::new();
    codes.push(with("make-scene", &["--out".into(), s(&scene)]));
    let (t1, t2) = (root.join("train1"), root.join("train2"));
    codes.push(with("train", &["--scene".into(), s(&scene), "--out".into(), s(&t1), "--steps".into(), "40".into()]));
    codes.push(rerun("train", &t1, &t2));
    let ck = s(&t1.join("final.ckpt"));
    let (r1, r2) = (root.join("render1"), root.join("render2"));
    codes.push(with("render", &["--scene".into(), s(&scene), "--checkpoint".into(), ck.clone(), "--out".into(), s(&r1), "--view".into(), "2".into()]));
    codes.push(rerun("render", &r1, &r2));
    let (e1, e2) = (root.join("eval1"), root.join("eval2"));
    codes.push(with("eval", &["--scene".into(), s(&scene), "--checkpoint".into(), ck, "--out".into(), s(&e1)]));
    codes.push(rerun("eval", &e1, &e2));
    if codes.iter().any(|&c| c != 0) {
        return outcome(false, format!("CLI exit codes {codes:?}"));
    }
    let read = |p: std::path::PathBuf| std::fs::read(p).unwrap();
    let losses_equal = loss_columns(&t1.join("loss_log.csv")) == loss_columns(&t2.join("loss_log.csv"))
        && read(t1.join("final.ckpt")) == read(t2.join("final.ckpt"));
    let renders_equal = ["mean", "variance", "depth"]
        .iter()
        .all(|k| read(r1.join(format!("view002_{k}.f64"))) == read(r2.join(format!("view002_{k}.f64"))));
    let evals_equal = report_without_timing(&e1.join("report.json")) == report_without_timing(&e2.join("report.json"));
    outcome(
        losses_equal && renders_equal && evals_equal,
        format!("train losses+checkpoint {losses_equal}, render floats {renders_equal}, eval report {evals_equal} (timing fields excluded)"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |id: u32, name: &str, start: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} [{id}] {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    report(1, "autodiff gradients", t, autodiff());
    let t = Instant::now();
    report(2, "distributions", t, distributions());
    let t = Instant::now();
    report(3, "renderer analytics", t, renderer());
    let t = Instant::now();
    report(4, "metric unit checks", t, metrics());

    let t = Instant::now();
    let slab = common::toy_dataset(tmp.path(), "slab");
    let sphere = common::toy_dataset(tmp.path(), "sphere");
    let slab_full = run_method(MethodId::Snerf, &slab, &seeded(0)).unwrap();
    report(5, "end-to-end toy scenes", t, end_to_end(&sphere, &slab_full));
    let t = Instant::now();
    let hemisphere = common::toy_dataset(tmp.path(), "hemisphere");
    report(6, "unobserved-region variance", t, unobserved(&hemisphere));
    let t = Instant::now();
    report(7, "ablation ordering", t, ablation(&slab, &slab_full));
    let t = Instant::now();
    report(8, "render timing ordering", t, timing(&slab));
    let t = Instant::now();
    report(9, "CLI reproducibility", t, reproducibility(tmp.path()));

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
