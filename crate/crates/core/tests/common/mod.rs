#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use snerf::autodiff::{finite_difference_check, GradCheckReport, ParameterSet};
use snerf::field::{FieldNetwork, FieldNetworkConfig, PositionalEncodingConfig};
use snerf::render::Ray;
use snerf::rng::stream;
use snerf::scene::{generate_dataset, load_dataset, AnalyticScene, Dataset, DatasetSpec, SceneBounds, TrainingTriplet};
use snerf::train::{build_loss, Model, StepNoise, TrainConfig};

pub const FD_STEP: f64 = 1e-6;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn random_vec(rng: &mut impl Rng, scale: f64) -> [f64; 3] {
    [(); 3].map(|_| rng.random_range(-scale..scale))
}

/// Gradient check of a small random field network on random inputs.
pub fn micro_net_check(seed: u64) -> GradCheckReport {
    let mut rng = stream(seed, "micro-net", 0);
    let depth = rng.random_range(0..4);
    let cfg = FieldNetworkConfig {
        width: rng.random_range(2..7),
        depth,
        skip: (depth > 1).then(|| rng.random_range(1..depth)),
        dropout: 0.0,
        encoding: PositionalEncodingConfig {
            l_position: rng.random_range(0..3),
            l_direction: rng.random_range(0..2),
            include_raw_input: true,
        },
        dir_dim: 3,
    };
    let net = FieldNetwork::new(cfg).unwrap();
    let mut params = ParameterSet::new();
    net.init(&mut params, &mut rng);
    for (_, p) in params.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let rows = rng.random_range(2..6);
    let points: Vec<_> = (0..rows).map(|_| random_vec(&mut rng, 1.0)).collect();
    let dirs: Vec<_> = (0..rows).map(|_| unit(random_vec(&mut rng, 1.0))).collect();
    finite_difference_check(
        |tape, p| {
            let o = net.forward_points(tape, p, &points, &dirs, None)?;
            Ok(o.mu_r.sigmoid().sum() + o.sigma_r.ln().sum() + o.mu_alpha.relu().square().sum() + o.sigma_alpha.sum())
        },
        &params,
        FD_STEP,
    )
    .unwrap()
}

/// Random rays through a unit box with random colors.
pub fn synthetic_batch(rng: &mut impl Rng, rays: usize) -> Vec<TrainingTriplet> {
    (0..rays)
        .map(|_| {
            let origin = random_vec(rng, 0.3);
            let origin = [origin[0], origin[1], 2.5 + origin[2]];
            let dir = unit([rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), -1.0]);
            TrainingTriplet {
                color: [(); 3].map(|_| rng.random_range(0.0..1.0)),
                ray: Ray::new(origin, dir, 1.0, 4.0).unwrap(),
            }
        })
        .collect()
}

pub fn tiny_network() -> FieldNetworkConfig {
    FieldNetworkConfig {
        width: 8,
        depth: 2,
        skip: Some(1),
        encoding: PositionalEncodingConfig {
            l_position: 2,
            l_direction: 1,
            include_raw_input: true,
        },
        ..FieldNetworkConfig::default()
    }
}

pub fn tiny_train_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.loss.n_samples = 8;
    cfg.loss.k_samples = 4;
    cfg.loss.grid_points_per_axis = 2;
    cfg.loss.kl_mc_samples = 2;
    cfg.loss.kl_weight = 0.5;
    cfg.loss.sigma_c = 0.5;
    cfg.batch_rays = 4;
    cfg
}

/// Gradient check of the complete training objective with frozen noise.
pub fn full_loss_check(seed: u64, cfg: &TrainConfig) -> GradCheckReport {
    let model = Model::new(tiny_network(), seed).unwrap();
    let mut rng = stream(seed, "full-loss", 0);
    let batch = synthetic_batch(&mut rng, cfg.batch_rays);
    let bounds = SceneBounds::cube(1.0);
    let noise = StepNoise::draw(&model, cfg, batch.len(), &bounds, &mut rng).unwrap();
    finite_difference_check(
        |tape, p| Ok(build_loss(tape, &model, p, &batch, cfg, &noise)?.0),
        &model.params,
        FD_STEP,
    )
    .unwrap()
}

/// Generates (once) and loads a 64x64, 25-view toy dataset under `root`.
pub fn toy_dataset(root: &Path, scene: &str) -> Dataset {
    let dir = root.join(scene);
    if !dir.join("manifest.txt").exists() {
        let s = AnalyticScene::by_name(scene).unwrap();
        generate_dataset(&s, &DatasetSpec::default(), &dir, 1).unwrap();
    }
    load_dataset(&dir).unwrap()
}

/// A small dataset that generates in well under a second.
pub fn small_dataset(root: &Path, scene: &str, views: usize, size: usize) -> Dataset {
    let dir = root.join(format!("{scene}_{views}_{size}"));
    let s = AnalyticScene::by_name(scene).unwrap();
    let spec = DatasetSpec {
        n_views: views,
        width: size,
        height: size,
        oracle_points: 256,
        ..DatasetSpec::default()
    };
    generate_dataset(&s, &spec, &dir, 1).unwrap();
    load_dataset(&dir).unwrap()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Mass of the logistic-normal density over `(0, 1)`, integrated on
/// geometrically refined panels towards both ends.
pub fn logistic_normal_mass(mu: f64, sigma: f64) -> f64 {
    let pdf = |r: f64| {
        if r <= 0.0 || r >= 1.0 {
            0.0
        } else {
            snerf::dist::logistic_normal_pdf(r, mu, sigma).unwrap()
        }
    };
    let mut edges = vec![0.0];
    edges.extend((1..=12).rev().map(|k| 10f64.powi(-k)));
    edges.push(0.5);
    edges.extend((1..=12).map(|k| 1.0 - 10f64.powi(-k)));
    edges.push(1.0);
    edges.windows(2).map(|w| simpson(pdf, w[0], w[1], 2000)).sum()
}

/// `Phi(0) + integral of the positive branch`.
pub fn rectified_normal_mass(mu: f64, sigma: f64) -> f64 {
    let point = snerf::dist::rectified_normal_cdf_at_zero(mu, sigma).unwrap();
    let hi = mu.max(0.0) + 12.0 * sigma;
    point + simpson(|a| snerf::dist::rectified_normal_pdf(a.max(1e-300), mu, sigma).unwrap(), 0.0, hi, 20_000)
}

pub fn gaussian_kl(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    (sp / sq).ln() + (sq * sq + (mq - mp).powi(2)) / (2.0 * sp * sp) - 0.5
}

/// Rectified-normal KL: point-mass term plus a 10^4-point quadrature of
/// `q log(q / p)` over the positive half-line.
pub fn rectified_kl_quadrature(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    use snerf::dist::rectified_normal_cdf_at_zero as phi0;
    let (fq, fp) = (phi0(mq, sq).unwrap(), phi0(mp, sp).unwrap());
    let point = if fq > 0.0 { fq * (fq / fp).ln() } else { 0.0 };
    let hi = mq.max(0.0) + 12.0 * sq;
    let integrand = |a: f64| {
        let zq = (a - mq) / sq;
        let zp = (a - mp) / sp;
        let q = (-0.5 * zq * zq).exp() / (sq * (2.0 * std::f64::consts::PI).sqrt());
        if q == 0.0 {
            0.0
        } else {
            q * ((sp / sq).ln() + 0.5 * (zp * zp - zq * zq))
        }
    };
    point + simpson(integrand, 0.0, hi, 10_000)
}

pub const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;
/// `(1 - 2/e) / (1 - 1/e)`: expected depth of a unit-density ray on `[0, 1]`.
pub const CONSTANT_FIELD_DEPTH: f64 = 0.418_023_293_130_673_55;

/// Worst-case absolute errors of one integrator against analytic rays on `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct RendererErrors {
    /// unit density and radiance: color `1 - 1/e`
    pub constant_color: f64,
    /// unit density: expected depth
    pub constant_depth: f64,
    /// density `alpha(t) = t`: transmittance `exp(-t^2 / 2)` at each node
    pub linear_transmittance: f64,
    /// density `alpha(t) = t`, unit radiance: color `1 - exp(-1/2)`
    pub linear_color: f64,
}

pub fn renderer_errors(n: usize, integrator: snerf::render::Integrator) -> RendererErrors {
    use snerf::render::*;
    let g = RaySampleGrid::midpoints(0.0, 1.0, n).unwrap();
    let composite = |traj: &TrajectorySample| match integrator {
        Integrator::Trapezoidal => composite_trapezoidal(traj, &g).unwrap(),
        Integrator::Alpha => composite_alpha(traj, &g).unwrap(),
    };
    let flat = TrajectorySample::constant(n, [1.0; 3], 1.0);
    let constant_color = composite(&flat).iter().map(|c| (c - ONE_MINUS_INV_E).abs()).fold(0.0, f64::max);
    let constant_depth = (expected_depth(&flat.density, &g, integrator).unwrap() - CONSTANT_FIELD_DEPTH).abs();
    let linear = TrajectorySample {
        radiance: vec![[1.0; 3]; n],
        density: g.t().to_vec(),
    };
    let linear_color = composite(&linear)
        .iter()
        .map(|c| (c - (1.0 - (-0.5f64).exp())).abs())
        .fold(0.0, f64::max);
    let nodes = match integrator {
        Integrator::Trapezoidal => g.trapezoid_nodes(),
        Integrator::Alpha => std::iter::once(0.0)
            .chain(g.t().windows(2).map(|w| 0.5 * (w[0] + w[1])))
            .collect(),
    };
    let trans = transmittance(&linear.density, &g, integrator).unwrap();
    assert_eq!(trans.len(), nodes.len());
    let linear_transmittance = trans
        .iter()
        .zip(&nodes)
        .map(|(t, x)| (t - (-0.5 * x * x).exp()).abs())
        .fold(0.0, f64::max);
    RendererErrors {
        constant_color,
        constant_depth,
        linear_transmittance,
        linear_color,
    }
}
