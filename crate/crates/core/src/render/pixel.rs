use rand::Rng;
use rand_distr::StandardNormal;

use super::camera::Ray;
use super::composite::{composite_batch, CompositeLayout, Integrator};
use super::sampling::{stratified_with, RaySampleGrid};
use crate::autodiff::{ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::field::{repeat_rows, DropoutMasks, FieldNetwork, FieldOutputs};

/// `K` Monte-Carlo samples of a `D`-dimensional pixel quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSampleSet<const D: usize> {
    samples: Vec<[f64; D]>,
}

pub type ColorSamples = PixelSampleSet<3>;
pub type DepthSamples = PixelSampleSet<1>;

impl<const D: usize> PixelSampleSet<D> {
    pub fn new(samples: Vec<[f64; D]>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("a pixel sample set needs K >= 1"));
        }
        Ok(Self { samples })
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[[f64; D]] {
        &self.samples
    }

    pub fn mean(&self) -> [f64; D] {
        let mut m = [0.0; D];
        for s in &self.samples {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b;
            }
        }
        m.map(|v| v / self.samples.len() as f64)
    }

    /// Unbiased sample variance per component; exactly zero when `K = 1`.
    pub fn variance(&self) -> [f64; D] {
        let k = self.samples.len();
        if k < 2 {
            return [0.0; D];
        }
        let m = self.mean();
        let mut v = [0.0; D];
        for s in &self.samples {
            for d in 0..D {
                v[d] += (s[d] - m[d]).powi(2);
            }
        }
        v.map(|x| x / (k - 1) as f64)
    }
}

/// Color and depth samples for one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelDistribution {
    pub color: ColorSamples,
    pub depth: DepthSamples,
}

/// How per-point field distributions become trajectory values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FieldMode {
    /// Reparameterized draws `sigmoid(mu + eps sigma)`, `max(0, mu + eps sigma)`.
    #[default]
    Stochastic,
    /// Deterministic NeRF: `sigmoid(mu_r)`, `max(0, mu_alpha)`, one trajectory.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub n_samples: usize,
    pub k_samples: usize,
    pub integrator: Integrator,
    pub mode: FieldMode,
    /// Rays evaluated per forward pass.
    pub chunk_rays: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            n_samples: 64,
            k_samples: 16,
            integrator: Integrator::Trapezoidal,
            mode: FieldMode::Stochastic,
            chunk_rays: 128,
        }
    }
}

impl RenderSettings {
    fn trajectories(&self) -> usize {
        match self.mode {
            FieldMode::Stochastic => self.k_samples,
            FieldMode::Mean => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k_samples == 0 || self.chunk_rays == 0 {
            return Err(Error::invalid("K and chunk size must be >= 1"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("need at least 2 samples per ray"));
        }
        Ok(())
    }
}

/// Per-ray randomness: bin offsets, then standard-normal draws for
/// `alpha, r_0, r_1, r_2`, each `K x N` trajectory-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RayNoise {
    pub offsets: Vec<f64>,
    pub eps: [Vec<f64>; 4],
}

impl RayNoise {
    pub fn draw(n: usize, k: usize, mode: FieldMode, rng: &mut impl Rng) -> Self {
        let offsets = (0..n).map(|_| rng.random::<f64>()).collect();
        let count = match mode {
            FieldMode::Stochastic => k * n,
            FieldMode::Mean => 0,
        };
        let mut normals = || (0..count).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>();
        let eps = [normals(), normals(), normals(), normals()];
        Self { offsets, eps }
    }

    pub fn grid(&self, ray: &Ray) -> Result<RaySampleGrid> {
        let mut it = self.offsets.iter().copied();
        stratified_with(ray.near, ray.far, self.offsets.len(), || it.next().unwrap_or(0.5))
    }
}

/// Sample points `x_o + t_i d` and directions, ray-major.
pub fn ray_points(rays: &[Ray], grids: &[RaySampleGrid]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut points = Vec::new();
    let mut dirs = Vec::new();
    for (ray, grid) in rays.iter().zip(grids) {
        for &t in grid.t() {
            points.push(ray.at(t));
            dirs.push(ray.dir);
        }
    }
    (points, dirs)
}

/// Trajectory values `[R K, N]` on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Trajectories<'t> {
    pub alpha: Var<'t>,
    pub radiance: [Var<'t>; 3],
}

/// Expands field outputs for `rays x n` points into `k` trajectories per ray.
///
/// `eps` holds `[R K, N]` noise for `alpha, r_0, r_1, r_2`; `None` gives the
/// deterministic mean-field trajectory.
pub fn sample_trajectories<'t>(
    out: &FieldOutputs<'t>,
    rays: usize,
    n: usize,
    k: usize,
    eps: Option<&[Tensor; 4]>,
) -> Trajectories<'t> {
    let tape = out.mu_r.tape();
    let idx = repeat_rows(rays, k);
    let spread = |v: Var<'t>| v.reshape(&[rays, n]).gather_rows(idx.clone());
    match eps {
        Some(e) => {
            let draw = |mu: Var<'t>, sigma: Var<'t>, e: &Tensor| {
                spread(mu) + spread(sigma) * tape.constant(e.clone())
            };
            Trajectories {
                alpha: draw(out.mu_alpha, out.sigma_alpha, &e[0]).relu(),
                radiance: [0, 1, 2].map(|c| {
                    draw(out.mu_r.slice_cols(c, 1), out.sigma_r.slice_cols(c, 1), &e[c + 1]).sigmoid()
                }),
            }
        }
        None => Trajectories {
            alpha: spread(out.mu_alpha).relu(),
            radiance: [0, 1, 2].map(|c| spread(out.mu_r.slice_cols(c, 1)).sigmoid()),
        },
    }
}

/// Stacks per-ray noise into `[R K, N]` tensors.
pub fn stack_noise(noise: &[RayNoise], n: usize, k: usize) -> [Tensor; 4] {
    [0, 1, 2, 3].map(|j| {
        let data: Vec<f64> = noise.iter().flat_map(|r| r.eps[j].iter().copied()).collect();
        Tensor::from_parts(vec![noise.len() * k, n], data)
    })
}

/// Raw per-trajectory results for a chunk of rays.
pub(crate) struct ChunkResult {
    /// `R K` colors, ray-major
    pub colors: Vec<[f64; 3]>,
    pub depths: Vec<f64>,
    /// `sigma_alpha` composited with the color weights, when requested
    pub composited_sigma: Option<Vec<f64>>,
}

pub(crate) fn render_chunk(
    net: &FieldNetwork,
    params: &ParameterSet,
    rays: &[Ray],
    noise: &[RayNoise],
    settings: &RenderSettings,
    masks: Option<&DropoutMasks>,
    composite_sigma: bool,
) -> Result<ChunkResult> {
    let n = settings.n_samples;
    let k = settings.trajectories();
    let grids = rays
        .iter()
        .zip(noise)
        .map(|(r, z)| z.grid(r))
        .collect::<Result<Vec<_>>>()?;
    let (points, dirs) = ray_points(rays, &grids);
    let tape = Tape::new();
    let out = net.forward_points(&tape, params, &points, &dirs, masks)?;
    let eps = match settings.mode {
        FieldMode::Stochastic => Some(stack_noise(noise, n, k)),
        FieldMode::Mean => None,
    };
    let traj = sample_trajectories(&out, rays.len(), n, k, eps.as_ref());
    let layout = CompositeLayout::new(settings.integrator, &grids, k)?;
    let comp = composite_batch(&layout, traj.alpha, traj.radiance);
    let sigma = composite_sigma.then(|| {
        let s = out.sigma_alpha.reshape(&[rays.len(), n]).gather_rows(repeat_rows(rays.len(), k));
        layout.integrate(comp.weights, s)
    });
    tape.check().map_err(|e| match e {
        Error::NonFinite(op) => Error::Diverged(op),
        other => other,
    })?;
    let [r, g, b] = comp.color.map(|c| c.value().data().to_vec());
    let colors = (0..r.len()).map(|i| [r[i], g[i], b[i]]).collect();
    let depths = layout.expected_depths(&comp.weights.value());
    Ok(ChunkResult {
        colors,
        depths,
        composited_sigma: sigma.map(|s| s.value().data().to_vec()),
    })
}

/// K color and depth samples for one ray, with all randomness from `rng`.
pub fn render_pixel_distribution(
    net: &FieldNetwork,
    params: &ParameterSet,
    ray: &Ray,
    settings: &RenderSettings,
    rng: &mut impl Rng,
) -> Result<PixelDistribution> {
    settings.validate()?;
    let noise = RayNoise::draw(settings.n_samples, settings.k_samples, settings.mode, rng);
    let chunk = render_chunk(net, params, std::slice::from_ref(ray), &[noise], settings, None, false)?;
    Ok(PixelDistribution {
        color: PixelSampleSet::new(chunk.colors)?,
        depth: PixelSampleSet::new(chunk.depths.into_iter().map(|d| [d]).collect())?,
    })
}

/// Renders many rays; ray `i` draws from `rng::stream(seed, "pixel", stream_ids[i])`
/// so results do not depend on chunking.
pub fn render_rays(
    net: &FieldNetwork,
    params: &ParameterSet,
    rays: &[Ray],
    stream_ids: &[u64],
    seed: u64,
    settings: &RenderSettings,
    masks: Option<&DropoutMasks>,
) -> Result<Vec<PixelDistribution>> {
    settings.validate()?;
    if rays.len() != stream_ids.len() {
        return Err(Error::invalid("one stream id per ray required"));
    }
    let k = settings.trajectories();
    let mut out = Vec::with_capacity(rays.len());
    for (chunk, ids) in rays.chunks(settings.chunk_rays).zip(stream_ids.chunks(settings.chunk_rays)) {
        let noise: Vec<RayNoise> = ids
            .iter()
            .map(|&id| {
                let mut rng = crate::rng::stream(seed, "pixel", id);
                RayNoise::draw(settings.n_samples, k, settings.mode, &mut rng)
            })
            .collect();
        let res = render_chunk(net, params, chunk, &noise, settings, masks, false)?;
        for j in 0..chunk.len() {
            let colors = res.colors[j * k..(j + 1) * k].to_vec();
            let depths = res.depths[j * k..(j + 1) * k].iter().map(|&d| [d]).collect();
            out.push(PixelDistribution {
                color: PixelSampleSet::new(colors)?,
                depth: PixelSampleSet::new(depths)?,
            });
        }
    }
    Ok(out)
}

/// Like [`render_rays`] for one deterministic trajectory per ray, also
/// returning `sigma_alpha` composited with the color weights.
pub fn render_rays_with_sigma(
    net: &FieldNetwork,
    params: &ParameterSet,
    rays: &[Ray],
    stream_ids: &[u64],
    seed: u64,
    settings: &RenderSettings,
) -> Result<Vec<([f64; 3], f64, f64)>> {
    let settings = RenderSettings {
        mode: FieldMode::Mean,
        ..*settings
    };
    settings.validate()?;
    let mut out = Vec::with_capacity(rays.len());
    for (chunk, ids) in rays.chunks(settings.chunk_rays).zip(stream_ids.chunks(settings.chunk_rays)) {
        let noise: Vec<RayNoise> = ids
            .iter()
            .map(|&id| {
                let mut rng = crate::rng::stream(seed, "pixel", id);
                RayNoise::draw(settings.n_samples, 1, FieldMode::Mean, &mut rng)
            })
            .collect();
        let res = render_chunk(net, params, chunk, &noise, &settings, None, true)?;
        let sigma = res.composited_sigma.expect("requested");
        for j in 0..chunk.len() {
            out.push((res.colors[j], res.depths[j], sigma[j]));
        }
    }
    Ok(out)
}
