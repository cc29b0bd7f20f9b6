//! Training and evaluating each method on a dataset.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{channel_means, floor_fraction, mse_uncertainty_correlation, nll_metric, CorrelationKind};
use crate::autodiff::ParameterSet;
use crate::error::{Error, Result};
use crate::field::{DropoutMasks, FieldNetworkConfig};
use crate::render::{render_rays, render_rays_with_sigma, FieldMode, Integrator, Ray, RenderSettings};
use crate::scene::{default_split, plane_side, Dataset, SceneBounds, TrainingTriplet};
use crate::train::{fit, AblationMode, LossRecord, Model, Objective, OptimizerState, TrainConfig, BETA_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    Snerf,
    SnerfWoKl,
    SnerfWKl,
    McDropout,
    DeepEnsemble,
    VarianceHead,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        Self::Snerf,
        Self::SnerfWoKl,
        Self::SnerfWKl,
        Self::McDropout,
        Self::DeepEnsemble,
        Self::VarianceHead,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Snerf => "snerf",
            Self::SnerfWoKl => "snerf_wo_kl",
            Self::SnerfWKl => "snerf_w_kl",
            Self::McDropout => "mc_dropout",
            Self::DeepEnsemble => "deep_ensemble",
            Self::VarianceHead => "variance_head",
        }
    }

    /// The KL setting of a stochastic-field method.
    pub fn ablation_mode(&self) -> Option<AblationMode> {
        match self {
            Self::Snerf => Some(AblationMode::Full),
            Self::SnerfWKl => Some(AblationMode::WithKl),
            Self::SnerfWoKl => Some(AblationMode::WithoutKl),
            _ => None,
        }
    }

    pub fn from_ablation(mode: AblationMode) -> Self {
        match mode {
            AblationMode::Full => Self::Snerf,
            AblationMode::WithKl => Self::SnerfWKl,
            AblationMode::WithoutKl => Self::SnerfWoKl,
        }
    }
}

impl std::str::FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineConfig {
    pub ensemble_size: usize,
    pub dropout_passes: usize,
    pub dropout_rate: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            dropout_passes: 5,
            dropout_rate: 0.2,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self, method: MethodId) -> Result<()> {
        match method {
            MethodId::DeepEnsemble if self.ensemble_size < 2 => {
                Err(Error::invalid("an ensemble needs at least 2 members for a variance"))
            }
            MethodId::McDropout if self.dropout_passes < 2 => {
                Err(Error::invalid("MC dropout needs at least 2 passes for a variance"))
            }
            MethodId::McDropout if !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) => {
                Err(Error::invalid("dropout rate must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

/// Everything a method run depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub network: FieldNetworkConfig,
    /// Base training setup; objective, integrator and KL flags are set per method.
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub render_seed: u64,
    /// Evaluate at most this many test views (0: all).
    pub max_test_views: usize,
    pub correlation: CorrelationKind,
    pub chunk_rays: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            network: FieldNetworkConfig::default(),
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            train_fraction: 0.8,
            split_seed: 0,
            render_seed: 0,
            max_test_views: 0,
            correlation: CorrelationKind::Pearson,
            chunk_rays: 256,
        }
    }
}

impl EvalConfig {
    /// Small setup that trains a 64x64 toy scene in well under a minute:
    /// width 32, 600 steps at lr 5e-3, likelihood std 0.4, three test views.
    pub fn toy() -> Self {
        let mut cfg = Self::default();
        cfg.network.width = 32;
        cfg.train.steps = 600;
        cfg.train.adam.lr = 5e-3;
        cfg.train.loss.sigma_c = 0.4;
        cfg.max_test_views = 3;
        cfg
    }

    pub fn network_config(&self, method: MethodId) -> FieldNetworkConfig {
        FieldNetworkConfig {
            dropout: if method == MethodId::McDropout { self.baseline.dropout_rate } else { 0.0 },
            ..self.network
        }
    }

    pub fn train_config(&self, method: MethodId) -> TrainConfig {
        let mut cfg = self.train;
        match method.ablation_mode() {
            Some(mode) => {
                cfg.objective = Objective::Variational;
                cfg.integrator = Integrator::Trapezoidal;
                cfg.loss = cfg.loss.with_mode(mode);
            }
            None => {
                cfg.objective = if method == MethodId::VarianceHead {
                    Objective::VarianceHead
                } else {
                    Objective::Deterministic
                };
                cfg.integrator = Integrator::Alpha;
                cfg.loss.scene_kl_enabled = false;
                cfg.loss.observed_ray_kl_enabled = false;
            }
        }
        cfg
    }

    pub fn render_settings(&self, method: MethodId) -> RenderSettings {
        let train = self.train_config(method);
        RenderSettings {
            n_samples: train.loss.n_samples,
            k_samples: train.loss.k_samples,
            integrator: train.integrator,
            mode: if method.ablation_mode().is_some() { FieldMode::Stochastic } else { FieldMode::Mean },
            chunk_rays: self.chunk_rays,
        }
    }

    fn member_count(&self, method: MethodId) -> usize {
        if method == MethodId::DeepEnsemble {
            self.baseline.ensemble_size
        } else {
            1
        }
    }
}

/// A trained method: one model, or one per ensemble member.
#[derive(Clone, Debug)]
pub struct TrainedMethod {
    pub method: MethodId,
    pub members: Vec<Model>,
    pub logs: Vec<Vec<LossRecord>>,
    pub train_seconds: f64,
}

fn member_prefix(i: usize) -> String {
    format!("member{i}.")
}

impl TrainedMethod {
    /// All parameters; ensemble members are stored under `member{i}.`.
    pub fn to_params(&self) -> ParameterSet {
        if self.members.len() == 1 {
            return self.members[0].params.clone();
        }
        let mut all = ParameterSet::new();
        for (i, m) in self.members.iter().enumerate() {
            all.extend_prefixed(&member_prefix(i), &m.params);
        }
        all
    }

    pub fn from_params(method: MethodId, network: FieldNetworkConfig, params: ParameterSet) -> Result<Self> {
        let mut members = Vec::new();
        if params.names().any(|n| n.starts_with("member0.")) {
            while params.names().any(|n| n.starts_with(&member_prefix(members.len()))) {
                let sub = params.with_prefix(&member_prefix(members.len()));
                members.push(Model::from_params(network, sub)?);
            }
        } else {
            members.push(Model::from_params(network, params)?);
        }
        if method == MethodId::DeepEnsemble && members.len() < 2 {
            return Err(Error::invalid("ensemble checkpoint holds fewer than 2 members"));
        }
        Ok(Self {
            method,
            members,
            logs: Vec::new(),
            train_seconds: 0.0,
        })
    }
}

fn member_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        crate::rng::stream(seed, "member", i as u64).random()
    }
}

/// Trains `method` on `data` with untouched initial weights per member.
pub fn train_method(
    method: MethodId,
    data: &[TrainingTriplet],
    bounds: &SceneBounds,
    cfg: &EvalConfig,
) -> Result<TrainedMethod> {
    cfg.baseline.validate(method)?;
    let network = cfg.network_config(method);
    let start = Instant::now();
    let mut members = Vec::new();
    let mut logs = Vec::new();
    for i in 0..cfg.member_count(method) {
        let seed = member_seed(cfg.train.seed, i);
        let train = TrainConfig {
            seed,
            ..cfg.train_config(method)
        };
        let mut model = Model::new(network, seed)?;
        let mut opt = OptimizerState::new();
        logs.push(fit(&mut model, &mut opt, data, bounds, &train, None)?);
        members.push(model);
    }
    Ok(TrainedMethod {
        method,
        members,
        logs,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Predictive mean and variance per pixel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub mean: Vec<[f64; 3]>,
    pub variance: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

/// Mean and `K - 1` variance of per-member or per-pass predictions.
fn moments(runs: &[Vec<([f64; 3], f64)>]) -> Prediction {
    let n = runs.len() as f64;
    let rays = runs[0].len();
    let mut p = Prediction::default();
    for j in 0..rays {
        let mut m = [0.0; 3];
        let mut d = 0.0;
        for r in runs {
            for c in 0..3 {
                m[c] += r[j].0[c] / n;
            }
            d += r[j].1 / n;
        }
        let mut v = [0.0; 3];
        for r in runs {
            for c in 0..3 {
                v[c] += (r[j].0[c] - m[c]).powi(2) / (n - 1.0);
            }
        }
        p.mean.push(m);
        p.variance.push(v);
        p.depth.push(d);
    }
    p
}

fn single_pass(
    model: &Model,
    rays: &[Ray],
    ids: &[u64],
    seed: u64,
    settings: &RenderSettings,
    pass: Option<u64>,
) -> Result<Vec<([f64; 3], f64)>> {
    let mut out = Vec::with_capacity(rays.len());
    for (c, (chunk, chunk_ids)) in rays.chunks(settings.chunk_rays).zip(ids.chunks(settings.chunk_rays)).enumerate() {
        let masks = pass.map(|p| {
            let mut rng = crate::rng::stream(seed, "dropout", p.wrapping_mul(1 << 32) + chunk_ids[0] + c as u64);
            DropoutMasks::sample(&model.net.config, chunk.len() * settings.n_samples, &mut rng)
        });
        let res = render_rays(&model.net, &model.params, chunk, chunk_ids, seed, settings, masks.as_ref())?;
        out.extend(res.iter().map(|d| (d.color.mean(), d.depth.mean()[0])));
    }
    Ok(out)
}

/// Renders `rays`; ray `i` uses the noise stream `ids[i]` under `seed`.
pub fn predict(
    trained: &TrainedMethod,
    rays: &[Ray],
    ids: &[u64],
    seed: u64,
    settings: &RenderSettings,
    baseline: &BaselineConfig,
) -> Result<Prediction> {
    if rays.is_empty() {
        return Ok(Prediction::default());
    }
    match trained.method {
        MethodId::Snerf | MethodId::SnerfWKl | MethodId::SnerfWoKl => {
            let model = &trained.members[0];
            let settings = RenderSettings {
                mode: FieldMode::Stochastic,
                ..*settings
            };
            let d = render_rays(&model.net, &model.params, rays, ids, seed, &settings, None)?;
            Ok(Prediction {
                mean: d.iter().map(|p| p.color.mean()).collect(),
                variance: d.iter().map(|p| p.color.variance()).collect(),
                depth: d.iter().map(|p| p.depth.mean()[0]).collect(),
            })
        }
        MethodId::VarianceHead => {
            let model = &trained.members[0];
            let d = render_rays_with_sigma(&model.net, &model.params, rays, ids, seed, settings)?;
            Ok(Prediction {
                mean: d.iter().map(|p| p.0).collect(),
                variance: d.iter().map(|p| [(p.2 + BETA_MIN).powi(2); 3]).collect(),
                depth: d.iter().map(|p| p.1).collect(),
            })
        }
        MethodId::DeepEnsemble => {
            let settings = RenderSettings {
                mode: FieldMode::Mean,
                ..*settings
            };
            let runs = trained
                .members
                .iter()
                .map(|m| single_pass(m, rays, ids, seed, &settings, None))
                .collect::<Result<Vec<_>>>()?;
            if runs.len() < 2 {
                return Err(Error::invalid("an ensemble needs at least 2 members for a variance"));
            }
            Ok(moments(&runs))
        }
        MethodId::McDropout => {
            let model = &trained.members[0];
            if model.net.config.dropout <= 0.0 {
                return Err(Error::invalid("MC dropout needs a network trained with dropout"));
            }
            baseline.validate(MethodId::McDropout)?;
            let settings = RenderSettings {
                mode: FieldMode::Mean,
                ..*settings
            };
            let runs = (0..baseline.dropout_passes as u64)
                .map(|p| single_pass(model, rays, ids, seed, &settings, Some(p)))
                .collect::<Result<Vec<_>>>()?;
            Ok(moments(&runs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scene: String,
    pub method: MethodId,
    pub nll: f64,
    /// `None` when either array has no spread.
    pub correlation: Option<f64>,
    pub correlation_kind: CorrelationKind,
    /// Squared error and variance are both averaged over the three channels.
    pub channel_reduction: String,
    pub render_seconds_per_view: f64,
    pub pixel_count: usize,
    pub test_views: Vec<usize>,
    pub variance_floor_fraction: f64,
    /// Mean variance on the unobserved over the observed side, for partitioned scenes.
    pub unobserved_variance_ratio: Option<f64>,
    pub train_seconds: f64,
}

/// One rendered test view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewResult {
    pub view: usize,
    pub width: usize,
    pub height: usize,
    pub mean: Vec<[f64; 3]>,
    pub sq_error: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricReport,
    pub views: Vec<ViewResult>,
}

/// Ratio of mean predicted variance over pixels whose expected-depth point
/// lies on the positive (unobserved) side of `plane` to that on the other side.
pub fn unobserved_region_statistic(variance: &[f64], points: &[[f64; 3]], plane: [f64; 4]) -> Result<f64> {
    if variance.len() != points.len() {
        return Err(Error::invalid("one point per variance value required"));
    }
    let (mut su, mut nu, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (v, p) in variance.iter().zip(points) {
        if plane_side(plane, *p) > 0.0 {
            su += v;
            nu += 1;
        } else {
            so += v;
            no += 1;
        }
    }
    if nu == 0 || no == 0 {
        return Err(Error::invalid("degenerate partition: all pixels fall on one side"));
    }
    let observed = so / no as f64;
    if observed <= 0.0 {
        return Err(Error::invalid("observed side has zero variance"));
    }
    Ok((su / nu as f64) / observed)
}

/// The test views a config evaluates: all of them, or an evenly spaced
/// subset of `max_test_views`.
pub fn evaluation_views(test: &[usize], cfg: &EvalConfig) -> Vec<usize> {
    let n = test.len();
    if cfg.max_test_views == 0 || cfg.max_test_views >= n {
        return test.to_vec();
    }
    let k = cfg.max_test_views;
    (0..k).map(|i| test[(2 * i + 1) * n / (2 * k)]).collect()
}

/// Renders every listed test view and scores it.
pub fn evaluate(trained: &TrainedMethod, dataset: &Dataset, views: &[usize], cfg: &EvalConfig) -> Result<Evaluation> {
    if views.is_empty() {
        return Err(Error::invalid("no test views to evaluate"));
    }
    let m = &dataset.manifest;
    let settings = cfg.render_settings(trained.method);
    let pixels_per_view = (m.intrinsics.width * m.intrinsics.height) as u64;
    let (mut means, mut vars, mut truth, mut points) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut results = Vec::new();
    let mut render_seconds = 0.0;
    for &v in views {
        let rays = m.view_rays(v)?;
        let ids: Vec<u64> = (0..rays.len() as u64).map(|i| v as u64 * pixels_per_view + i).collect();
        let start = Instant::now();
        let pred = predict(trained, &rays, &ids, cfg.render_seed, &settings, &cfg.baseline)?;
        render_seconds += start.elapsed().as_secs_f64();
        let gt = &dataset.images[v].pixels;
        let (sq_error, variance) = channel_means(&pred.mean, &pred.variance, gt);
        points.extend(rays.iter().zip(&pred.depth).map(|(r, &d)| r.at(d)));
        means.extend_from_slice(&pred.mean);
        vars.extend_from_slice(&pred.variance);
        truth.extend_from_slice(gt);
        results.push(ViewResult {
            view: v,
            width: m.intrinsics.width,
            height: m.intrinsics.height,
            mean: pred.mean,
            sq_error,
            variance,
        });
    }
    let (_, nll) = nll_metric(&means, &vars, &truth)?;
    if !nll.is_finite() {
        return Err(Error::Diverged("nll_metric"));
    }
    let (err, var) = channel_means(&means, &vars, &truth);
    let ratio = match m.partition {
        Some(plane) => Some(unobserved_region_statistic(&var, &points, plane)?),
        None => None,
    };
    let report = MetricReport {
        scene: m.name.clone(),
        method: trained.method,
        nll,
        correlation: mse_uncertainty_correlation(&err, &var, cfg.correlation),
        correlation_kind: cfg.correlation,
        channel_reduction: "mean".to_string(),
        render_seconds_per_view: render_seconds / views.len() as f64,
        pixel_count: err.len(),
        test_views: views.to_vec(),
        variance_floor_fraction: floor_fraction(&vars),
        unobserved_variance_ratio: ratio,
        train_seconds: trained.train_seconds,
    };
    if report.variance_floor_fraction > 0.01 {
        log::warn!(
            "{}: variance floor hit on {:.1}% of channel values",
            report.method,
            100.0 * report.variance_floor_fraction
        );
    }
    Ok(Evaluation { report, views: results })
}

/// Splits, trains and evaluates one method.
pub fn run_method(method: MethodId, dataset: &Dataset, cfg: &EvalConfig) -> Result<(TrainedMethod, Evaluation)> {
    let split = default_split(&dataset.manifest, cfg.train_fraction, cfg.split_seed)?;
    let data = dataset.triplets(&split.train)?;
    let bounds = dataset.manifest.scene_bounds()?;
    let trained = train_method(method, &data, &bounds, cfg)?;
    let eval = evaluate(&trained, dataset, &evaluation_views(&split.test, cfg), cfg)?;
    Ok((trained, eval))
}

/// Runs each method in turn; a failing method does not stop the others.
pub fn run_sweep(methods: &[MethodId], dataset: &Dataset, cfg: &EvalConfig) -> Vec<(MethodId, Result<Evaluation>)> {
    methods
        .iter()
        .map(|&m| (m, run_method(m, dataset, cfg).map(|(_, e)| e)))
        .collect()
}

/// The three KL settings, same seed and data.
pub fn run_ablation(dataset: &Dataset, cfg: &EvalConfig) -> Result<Vec<Evaluation>> {
    AblationMode::ALL
        .iter()
        .map(|&mode| run_method(MethodId::from_ablation(mode), dataset, cfg).map(|(_, e)| e))
        .collect()
}
