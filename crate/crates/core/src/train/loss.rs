//! Likelihood and KL terms of the training objective.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::dist::{density_kl, radiance_kl, PriorVars};
use crate::error::{Error, Result};
use crate::field::{FieldNetwork, FieldOutputs};
use crate::render::ColorSamples;
use crate::scene::SceneBounds;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean over the K samples of `log N(c | c_k, sigma_c^2 I)`, summed over channels.
pub fn pixel_log_likelihood(samples: &ColorSamples, c: [f64; 3], sigma_c: f64) -> Result<f64> {
    if !(sigma_c > 0.0) {
        return Err(Error::invalid("likelihood sigma must be positive"));
    }
    let per: f64 = samples
        .samples()
        .iter()
        .map(|s| {
            (0..3)
                .map(|ch| -0.5 * ((c[ch] - s[ch]) / sigma_c).powi(2) - sigma_c.ln() - LN_SQRT_2PI)
                .sum::<f64>()
        })
        .sum();
    Ok(per / samples.k() as f64)
}

/// Negative mean Gaussian log-likelihood over rows.
///
/// `pred` and `target` are `[M, 1]` per channel; `sigma` is a constant or
/// a per-row `[M, 1]` scale.
pub fn gaussian_nll<'t>(pred: [Var<'t>; 3], target: [Var<'t>; 3], sigma: Var<'t>) -> Var<'t> {
    let per_channel = |c: usize| {
        let z = (target[c] - pred[c]) / sigma;
        z.square() * 0.5 + sigma.ln() + LN_SQRT_2PI
    };
    (per_channel(0) + per_channel(1) + per_channel(2)).mean()
}

/// Per-row KL of the field outputs against a prior, `[M, 1]`.
///
/// `eps` holds `[M, S]` standard normals for `alpha, r_0, r_1, r_2`.
pub fn field_kl_rows<'t>(out: &FieldOutputs<'t>, prior: &PriorVars<'t>, eps: &[Tensor; 4]) -> Var<'t> {
    let tape = out.mu_r.tape();
    let mut total = density_kl(
        out.mu_alpha,
        out.sigma_alpha,
        prior.density_mu,
        prior.density_sigma,
        tape.constant(eps[0].clone()),
    );
    for c in 0..3 {
        total = total
            + radiance_kl(
                out.mu_r.slice_cols(c, 1),
                out.sigma_r.slice_cols(c, 1),
                prior.radiance_mu.slice_cols(c, 1),
                prior.radiance_sigma.slice_cols(c, 1),
                tape.constant(eps[c + 1].clone()),
            );
    }
    total
}

/// Standard normals `[rows, samples]` for the four KL channels.
pub fn draw_kl_noise(rows: usize, samples: usize, rng: &mut impl Rng) -> [Tensor; 4] {
    [(); 4].map(|_| {
        let data = (0..rows * samples).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::from_parts(vec![rows, samples], data)
    })
}

/// Location-direction pairs for the scene KL: one uniform point in each of
/// the `g^3` cells of `bounds`, each with a uniformly random unit direction.
pub fn scene_grid(bounds: &SceneBounds, g: usize, rng: &mut impl Rng) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    if g == 0 {
        return Err(Error::invalid("grid_points_per_axis must be >= 1"));
    }
    let mut points = Vec::with_capacity(g * g * g);
    let mut dirs = Vec::with_capacity(g * g * g);
    for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                let cell = [i, j, k];
                let x = [0, 1, 2].map(|a| {
                    let w = (bounds.hi[a] - bounds.lo[a]) / g as f64;
                    bounds.lo[a] + (cell[a] as f64 + rng.random::<f64>()) * w
                });
                points.push(x);
                dirs.push(random_direction(rng));
            }
        }
    }
    Ok((points, dirs))
}

pub fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [(); 3].map(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|x| x / n);
        }
    }
}

/// Frozen randomness for one scene-KL evaluation.
#[derive(Clone, Debug)]
pub struct SceneKlNoise {
    pub points: Vec<[f64; 3]>,
    pub dirs: Vec<[f64; 3]>,
    pub eps: [Tensor; 4],
}

impl SceneKlNoise {
    pub fn draw(bounds: &SceneBounds, g: usize, mc_samples: usize, rng: &mut impl Rng) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::invalid("kl_mc_samples must be >= 1"));
        }
        let (points, dirs) = scene_grid(bounds, g, rng)?;
        let eps = draw_kl_noise(points.len(), mc_samples, rng);
        Ok(Self { points, dirs, eps })
    }
}

/// Mean KL over the stratified scene grid against the unobserved-space prior.
pub fn scene_kl<'t>(
    tape: &'t Tape,
    net: &FieldNetwork,
    params: &crate::autodiff::ParameterSet,
    prior: &PriorVars<'t>,
    noise: &SceneKlNoise,
) -> Result<KlTerm<'t>> {
    if net.config.dropout > 0.0 {
        return Err(Error::invalid("scene KL is defined for the variational model only"));
    }
    let out = net.forward_points(tape, params, &noise.points, &noise.dirs, None)?;
    Ok(KlTerm::from_rows(field_kl_rows(&out, prior, &noise.eps)))
}

/// Mean KL at the batch's ray sample locations against the learned prior.
pub fn observed_ray_kl<'t>(out: &FieldOutputs<'t>, prior: &PriorVars<'t>, eps: &[Tensor; 4]) -> KlTerm<'t> {
    KlTerm::from_rows(field_kl_rows(out, prior, eps))
}

/// A KL term averaged over locations, with the standard error of that mean.
#[derive(Clone, Copy, Debug)]
pub struct KlTerm<'t> {
    pub value: Var<'t>,
    pub stderr: f64,
}

impl<'t> KlTerm<'t> {
    fn from_rows(rows: Var<'t>) -> Self {
        let xs = rows.value().data().to_vec();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { value: rows.mean(), stderr }
    }
}
