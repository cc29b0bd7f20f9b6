use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use super::loss::{draw_kl_noise, gaussian_nll, observed_ray_kl, scene_kl, SceneKlNoise};
use super::optim::{AdamConfig, OptimizerState};
use crate::autodiff::{ParameterSet, Tape, Tensor, Var};
use crate::dist::PriorParams;
use crate::error::{Error, Result};
use crate::field::{
    load_checkpoint, repeat_rows, save_checkpoint, DropoutMasks, FieldNetwork, FieldNetworkConfig,
};
use crate::render::{
    composite_batch, ray_points, sample_trajectories, stack_noise, CompositeLayout,
    FieldMode, Integrator, RayNoise, RaySampleGrid,
};
use crate::scene::{SceneBounds, TrainingTriplet};

/// Lower bound added to the composited scale of the variance-head model.
pub const BETA_MIN: f64 = 0.03;

/// Which model family the objective trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Objective {
    /// Stochastic field: MC likelihood over K trajectories plus KL terms.
    #[default]
    Variational,
    /// Deterministic NeRF with a fixed-variance Gaussian likelihood.
    Deterministic,
    /// Deterministic NeRF that also composites a per-point scale and is
    /// trained with a heteroscedastic Gaussian likelihood.
    VarianceHead,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variational" => Ok(Self::Variational),
            "deterministic" => Ok(Self::Deterministic),
            "variance_head" => Ok(Self::VarianceHead),
            _ => Err(Error::invalid(format!("unknown objective `{s}`"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Variational => "variational",
            Self::Deterministic => "deterministic",
            Self::VarianceHead => "variance_head",
        })
    }
}

/// The three KL settings compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationMode {
    WithoutKl,
    WithKl,
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [Self::WithoutKl, Self::WithKl, Self::Full];

    pub fn method_id(&self) -> &'static str {
        match self {
            Self::WithoutKl => "snerf_wo_kl",
            Self::WithKl => "snerf_w_kl",
            Self::Full => "snerf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub k_samples: usize,
    pub n_samples: usize,
    /// Standard deviation of the pixel likelihood.
    pub sigma_c: f64,
    pub kl_weight: f64,
    pub grid_points_per_axis: usize,
    pub kl_mc_samples: usize,
    pub scene_kl_enabled: bool,
    pub observed_ray_kl_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            k_samples: 16,
            n_samples: 64,
            sigma_c: 1.0,
            kl_weight: 1e-2,
            grid_points_per_axis: 4,
            kl_mc_samples: 1,
            scene_kl_enabled: true,
            observed_ray_kl_enabled: true,
        }
    }
}

impl LossConfig {
    pub fn with_mode(mut self, mode: AblationMode) -> Self {
        self.scene_kl_enabled = mode != AblationMode::WithoutKl;
        self.observed_ray_kl_enabled = mode == AblationMode::Full;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_samples == 0 || self.grid_points_per_axis == 0 || self.kl_mc_samples == 0 {
            return Err(Error::invalid("K, grid points and KL samples must be >= 1"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("need at least 2 samples per ray"));
        }
        if !(self.sigma_c > 0.0) || !(self.kl_weight >= 0.0) {
            return Err(Error::invalid("need sigma_c > 0 and kl_weight >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub batch_rays: usize,
    pub steps: u64,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    pub seed: u64,
    pub objective: Objective,
    pub integrator: Integrator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            batch_rays: 64,
            steps: 3000,
            checkpoint_every: 0,
            seed: 0,
            objective: Objective::Variational,
            integrator: Integrator::Trapezoidal,
        }
    }
}

impl TrainConfig {
    fn field_mode(&self) -> FieldMode {
        match self.objective {
            Objective::Variational => FieldMode::Stochastic,
            _ => FieldMode::Mean,
        }
    }

    fn trajectories(&self) -> usize {
        match self.objective {
            Objective::Variational => self.loss.k_samples,
            _ => 1,
        }
    }

    fn kl_active(&self) -> (bool, bool) {
        let on = self.objective == Objective::Variational && self.loss.kl_weight > 0.0;
        (
            on && self.loss.scene_kl_enabled,
            on && self.loss.observed_ray_kl_enabled,
        )
    }
}

/// Field network, its parameters, and the two priors.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: FieldNetwork,
    pub params: ParameterSet,
    pub scene_prior: PriorParams,
    pub ray_prior: PriorParams,
}

impl Model {
    pub fn new(config: FieldNetworkConfig, seed: u64) -> Result<Self> {
        let net = FieldNetwork::new(config)?;
        let mut params = ParameterSet::new();
        net.init(&mut params, &mut crate::rng::stream(seed, "init", 0));
        let scene_prior = PriorParams::unobserved("scene_prior");
        let ray_prior = PriorParams::observed("ray_prior");
        scene_prior.init(&mut params);
        ray_prior.init(&mut params);
        Ok(Self {
            net,
            params,
            scene_prior,
            ray_prior,
        })
    }

    /// Rebuilds a model around checkpointed parameters.
    pub fn from_params(config: FieldNetworkConfig, params: ParameterSet) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        for name in m.params.names().map(str::to_string).collect::<Vec<_>>() {
            let v = params
                .value(&name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor `{name}`")))?;
            let slot = m.params.get_mut(&name).expect("present");
            if v.shape() != slot.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint",
                    lhs: slot.value.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            slot.value = v.clone();
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub neg_loglik: f64,
    pub scene_kl: f64,
    pub observed_kl: f64,
    pub total: f64,
    /// Standard errors of the two KL estimates over their locations.
    pub scene_kl_stderr: f64,
    pub observed_kl_stderr: f64,
}

impl LossBreakdown {
    /// Names of KL terms whose estimate lies below `-3` standard errors.
    pub fn suspicious_kl(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.scene_kl < -3.0 * self.scene_kl_stderr {
            out.push("scene_kl");
        }
        if self.observed_kl < -3.0 * self.observed_kl_stderr {
            out.push("observed_kl");
        }
        out
    }
}

/// All randomness consumed by one training step.
#[derive(Clone, Debug)]
pub struct StepNoise {
    pub rays: Vec<RayNoise>,
    pub scene: Option<SceneKlNoise>,
    pub observed: Option<[Tensor; 4]>,
    pub masks: Option<DropoutMasks>,
}

impl StepNoise {
    pub fn draw(
        model: &Model,
        cfg: &TrainConfig,
        batch_len: usize,
        bounds: &SceneBounds,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n = cfg.loss.n_samples;
        let rays = (0..batch_len)
            .map(|_| RayNoise::draw(n, cfg.trajectories(), cfg.field_mode(), rng))
            .collect();
        let (scene_on, obs_on) = cfg.kl_active();
        let scene = if scene_on {
            Some(SceneKlNoise::draw(bounds, cfg.loss.grid_points_per_axis, cfg.loss.kl_mc_samples, rng)?)
        } else {
            None
        };
        let observed = obs_on.then(|| draw_kl_noise(batch_len * n, cfg.loss.kl_mc_samples, rng));
        let masks = (model.net.config.dropout > 0.0)
            .then(|| DropoutMasks::sample(&model.net.config, batch_len * n, rng));
        Ok(Self {
            rays,
            scene,
            observed,
            masks,
        })
    }
}

fn diverged(tape: &Tape, component: &'static str) -> Result<()> {
    tape.check().map_err(|e| match e {
        Error::NonFinite(_) => Error::Diverged(component),
        other => other,
    })
}

/// Builds the scalar objective on `tape` with `params` and frozen `noise`.
pub fn build_loss<'t>(
    tape: &'t Tape,
    model: &Model,
    params: &ParameterSet,
    batch: &[TrainingTriplet],
    cfg: &TrainConfig,
    noise: &StepNoise,
) -> Result<(Var<'t>, LossBreakdown)> {
    cfg.loss.validate()?;
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let n = cfg.loss.n_samples;
    let k = cfg.trajectories();
    let rays: Vec<_> = batch.iter().map(|t| t.ray).collect();
    let grids = rays
        .iter()
        .zip(&noise.rays)
        .map(|(r, z)| z.grid(r))
        .collect::<Result<Vec<RaySampleGrid>>>()?;
    let (points, dirs) = ray_points(&rays, &grids);
    let out = model.net.forward_points(tape, params, &points, &dirs, noise.masks.as_ref())?;
    let eps = (cfg.objective == Objective::Variational).then(|| stack_noise(&noise.rays, n, k));
    let traj = sample_trajectories(&out, rays.len(), n, k, eps.as_ref());
    let layout = CompositeLayout::new(cfg.integrator, &grids, k)?;
    let comp = composite_batch(&layout, traj.alpha, traj.radiance);

    let target = [0, 1, 2].map(|c| {
        let col: Vec<f64> = batch
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.color[c], k))
            .collect();
        tape.constant(Tensor::from_parts(vec![batch.len() * k, 1], col))
    });
    let nll = match cfg.objective {
        Objective::VarianceHead => {
            let s = out.sigma_alpha.reshape(&[rays.len(), n]).gather_rows(repeat_rows(rays.len(), k));
            let beta = layout.integrate(comp.weights, s) + BETA_MIN;
            gaussian_nll(comp.color, target, beta)
        }
        _ => gaussian_nll(comp.color, target, tape.scalar(cfg.loss.sigma_c)),
    };
    diverged(tape, "neg_loglik")?;

    let (scene_on, obs_on) = cfg.kl_active();
    let scene_term = match (&noise.scene, scene_on) {
        (Some(sn), true) => {
            let prior = model.scene_prior.bind(tape, params)?;
            let v = scene_kl(tape, &model.net, params, &prior, sn)?;
            diverged(tape, "scene_kl")?;
            Some(v)
        }
        _ => None,
    };
    let obs_term = match (&noise.observed, obs_on) {
        (Some(eps), true) => {
            let prior = model.ray_prior.bind(tape, params)?;
            let v = observed_ray_kl(&out, &prior, eps);
            diverged(tape, "observed_kl")?;
            Some(v)
        }
        _ => None,
    };

    let mut total = nll;
    let lambda = cfg.loss.kl_weight;
    for term in [scene_term, obs_term].into_iter().flatten() {
        total = total + term.value * lambda;
    }
    diverged(tape, "total")?;
    let breakdown = LossBreakdown {
        neg_loglik: nll.item(),
        scene_kl: scene_term.map_or(0.0, |v| v.value.item()),
        observed_kl: obs_term.map_or(0.0, |v| v.value.item()),
        total: total.item(),
        scene_kl_stderr: scene_term.map_or(0.0, |v| v.stderr),
        observed_kl_stderr: obs_term.map_or(0.0, |v| v.stderr),
    };
    Ok((total, breakdown))
}

/// `count` uniformly chosen triplet indices.
pub fn sample_batch(len: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

/// One optimizer update on `batch`; returns the loss before the update.
pub fn training_step(
    model: &mut Model,
    opt: &mut OptimizerState,
    batch: &[TrainingTriplet],
    cfg: &TrainConfig,
    bounds: &SceneBounds,
    rng: &mut impl Rng,
) -> Result<LossBreakdown> {
    let noise = StepNoise::draw(model, cfg, batch.len(), bounds, rng)?;
    let tape = Tape::new();
    let (total, breakdown) = build_loss(&tape, model, &model.params, batch, cfg, &noise)?;
    model.params.zero_grad();
    tape.backward(total, &mut model.params)?;
    opt.apply(&cfg.adam, &mut model.params)?;
    Ok(breakdown)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub loss: LossBreakdown,
    pub wall_ms: f64,
}

/// Runs steps `opt.step .. cfg.steps`. Step `s` draws its batch and noise
/// from `rng::stream(seed, "step", s)`, so a resumed run continues exactly.
///
/// With `checkpoint_dir`, writes `step_XXXXXX.ckpt` every
/// `checkpoint_every` steps and `final.ckpt` at the end.
pub fn fit(
    model: &mut Model,
    opt: &mut OptimizerState,
    data: &[TrainingTriplet],
    bounds: &SceneBounds,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<Vec<LossRecord>> {
    if data.is_empty() {
        return Err(Error::invalid("no training rays"));
    }
    if cfg.batch_rays == 0 {
        return Err(Error::invalid("batch_rays must be >= 1"));
    }
    let mut log = Vec::new();
    while opt.step < cfg.steps {
        let step = opt.step;
        let start = Instant::now();
        let mut rng = crate::rng::stream(cfg.seed, "step", step);
        let batch: Vec<TrainingTriplet> = sample_batch(data.len(), cfg.batch_rays, &mut rng)
            .into_iter()
            .map(|i| data[i])
            .collect();
        let loss = training_step(model, opt, &batch, cfg, bounds, &mut rng)?;
        for term in loss.suspicious_kl() {
            log::warn!("step {step}: {term} estimate below -3 standard errors; check the KL estimator");
        }
        log.push(LossRecord {
            step,
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && opt.step % cfg.checkpoint_every == 0 && opt.step < cfg.steps {
                save_training_checkpoint(&dir.join(format!("step_{:06}.ckpt", opt.step)), model, opt)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        save_training_checkpoint(&dir.join("final.ckpt"), model, opt)?;
    }
    Ok(log)
}

/// Model parameters plus optimizer moments in one file.
pub fn save_training_checkpoint(path: &Path, model: &Model, opt: &OptimizerState) -> Result<()> {
    let mut all = model.params.clone();
    all.extend_prefixed("", &opt.to_tensors());
    save_checkpoint(path, &all)
}

pub fn load_training_checkpoint(path: &Path, config: FieldNetworkConfig) -> Result<(Model, OptimizerState)> {
    let all = load_checkpoint(path)?;
    let opt = OptimizerState::from_tensors(&all);
    Ok((Model::from_params(config, all)?, opt))
}

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "step,neg_loglik,scene_kl,observed_kl,total,wall_ms")?;
        for r in log {
            let l = &r.loss;
            writeln!(
                f,
                "{},{},{},{},{},{:.3}",
                r.step, l.neg_loglik, l.scene_kl, l.observed_kl, l.total, r.wall_ms
            )?;
        }
        f.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
