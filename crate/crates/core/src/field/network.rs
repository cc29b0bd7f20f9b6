use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::encoding::{encode_rows, PositionalEncodingConfig};
use crate::autodiff::{concat, ParameterSet, Tape, Tensor, Var};
use crate::dist::{LogisticNormalParams, RectifiedNormalParams, SIGMA_FLOOR};
use crate::error::{Error, Result};

/// Raw outputs per point: `mu_r(3), raw_sigma_r(3), mu_alpha, raw_sigma_alpha`.
pub const OUTPUT_WIDTH: usize = 8;

/// Bias of the raw sigma outputs at init, `softplus^-1(0.5)`.
pub const RAW_SIGMA_INIT: f64 = -0.432_752_129_567_188_4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNetworkConfig {
    pub width: usize,
    /// Number of hidden trunk layers. 0 means one linear map from the
    /// encoded position straight to the 8 outputs (direction unused).
    pub depth: usize,
    /// Trunk layer that also receives the encoded position.
    pub skip: Option<usize>,
    /// Inverted-dropout rate; 0 disables dropout.
    pub dropout: f64,
    pub encoding: PositionalEncodingConfig,
    pub dir_dim: usize,
}

impl Default for FieldNetworkConfig {
    fn default() -> Self {
        Self {
            width: 64,
            depth: 4,
            skip: Some(2),
            dropout: 0.0,
            encoding: PositionalEncodingConfig::default(),
            dir_dim: 3,
        }
    }
}

impl FieldNetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth > 0 && self.width < 2 {
            return Err(Error::invalid("width must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(2..=3).contains(&self.dir_dim) {
            return Err(Error::invalid("direction must have 2 or 3 components"));
        }
        Ok(())
    }

    fn skip_layer(&self) -> Option<usize> {
        self.skip.filter(|&s| s > 0 && s < self.depth)
    }

    /// Trunk layers followed by a dropout mask (the 1st, 3rd, ... layer).
    pub fn dropout_layers(&self) -> Vec<usize> {
        (0..self.depth).step_by(2).collect()
    }

    fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let xw = self.encoding.position_width();
        if self.depth == 0 {
            return vec![("linear".into(), xw, OUTPUT_WIDTH)];
        }
        let dw = self.encoding.direction_width(self.dir_dim);
        let w = self.width;
        let mut shapes = Vec::new();
        for i in 0..self.depth {
            let fan_in = match i {
                0 => xw,
                _ if Some(i) == self.skip_layer() => w + xw,
                _ => w,
            };
            shapes.push((format!("layer{i}"), fan_in, w));
        }
        shapes.push(("density".into(), w, 2));
        shapes.push(("feature".into(), w, w));
        shapes.push(("radiance_hidden".into(), w + dw, w / 2));
        shapes.push(("radiance".into(), w / 2, 6));
        shapes
    }
}

/// Exact number of scalars the network's parameters occupy.
pub fn parameter_count(cfg: &FieldNetworkConfig) -> usize {
    cfg.layer_shapes().iter().map(|(_, i, o)| i * o + o).sum()
}

/// Per-point distribution parameters (sigma already positive).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldDistributionParams {
    pub radiance: LogisticNormalParams,
    pub density: RectifiedNormalParams,
}

/// Batched field outputs on a tape, one row per point.
#[derive(Clone, Copy, Debug)]
pub struct FieldOutputs<'t> {
    /// `[P, 3]`
    pub mu_r: Var<'t>,
    /// `[P, 3]`
    pub sigma_r: Var<'t>,
    /// `[P, 1]`
    pub mu_alpha: Var<'t>,
    /// `[P, 1]`
    pub sigma_alpha: Var<'t>,
}

/// One Bernoulli mask per dropout layer, entries `0` or `1 / (1 - rate)`.
///
/// Each mask is `[rows, width]` or `[1, width]` (shared by every row).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    masks: Vec<Tensor>,
}

impl DropoutMasks {
    pub fn sample(cfg: &FieldNetworkConfig, rows: usize, rng: &mut impl Rng) -> Self {
        let keep = 1.0 - cfg.dropout;
        let masks = cfg
            .dropout_layers()
            .iter()
            .map(|_| {
                let data = (0..rows * cfg.width)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                Tensor::from_parts(vec![rows, cfg.width], data)
            })
            .collect();
        Self { masks }
    }

    pub fn masks(&self) -> &[Tensor] {
        &self.masks
    }
}

/// The field network: an architecture plus the name prefix of its
/// parameters inside a shared [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldNetwork {
    pub config: FieldNetworkConfig,
    pub prefix: String,
}

fn softplus_sigma(raw: Var<'_>) -> Var<'_> {
    raw.softplus() + SIGMA_FLOOR
}

impl FieldNetwork {
    pub fn new(config: FieldNetworkConfig) -> Result<Self> {
        Self::with_prefix(config, "field.")
    }

    pub fn with_prefix(config: FieldNetworkConfig, prefix: &str) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            prefix: prefix.to_string(),
        })
    }

    fn name(&self, layer: &str, part: &str) -> String {
        format!("{}{layer}.{part}", self.prefix)
    }

    /// Inserts freshly initialized weights.
    ///
    /// Hidden layers draw from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, output
    /// heads from `U(-1 / sqrt(fan_in), 1 / sqrt(fan_in))`. Biases start at
    /// zero except the raw sigma outputs.
    pub fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng) {
        for (layer, fan_in, fan_out) in self.config.layer_shapes() {
            let is_head = matches!(layer.as_str(), "linear" | "density" | "radiance" | "feature");
            let bound = if is_head {
                (1.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let w = (0..fan_in * fan_out).map(|_| u.sample(rng)).collect();
            let mut b = vec![0.0; fan_out];
            match layer.as_str() {
                "linear" => {
                    b[3..6].fill(RAW_SIGMA_INIT);
                    b[7] = RAW_SIGMA_INIT;
                }
                "density" => b[1] = RAW_SIGMA_INIT,
                "radiance" => b[3..6].fill(RAW_SIGMA_INIT),
                _ => {}
            }
            params.insert(self.name(&layer, "w"), Tensor::from_parts(vec![fan_in, fan_out], w));
            params.insert(self.name(&layer, "b"), Tensor::from_parts(vec![1, fan_out], b));
        }
    }

    /// Same layout as [`FieldNetwork::init`] with every weight and bias zero.
    pub fn init_zeros(&self, params: &mut ParameterSet) {
        for (layer, fan_in, fan_out) in self.config.layer_shapes() {
            params.insert(self.name(&layer, "w"), Tensor::zeros(&[fan_in, fan_out]));
            params.insert(self.name(&layer, "b"), Tensor::zeros(&[1, fan_out]));
        }
    }

    fn linear<'t>(&self, tape: &'t Tape, params: &ParameterSet, layer: &str, x: Var<'t>) -> Result<Var<'t>> {
        let w = tape.param(params, &self.name(layer, "w"))?;
        let b = tape.param(params, &self.name(layer, "b"))?;
        Ok(x.matmul(w) + b)
    }

    /// Batched forward pass on pre-encoded inputs.
    ///
    /// `x_enc` is `[P, position_width]`, `d_enc` is `[P, direction_width]`.
    /// `masks` must be given exactly when the config's dropout rate is
    /// nonzero.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &ParameterSet,
        x_enc: Var<'t>,
        d_enc: Var<'t>,
        masks: Option<&DropoutMasks>,
    ) -> Result<FieldOutputs<'t>> {
        let cfg = &self.config;
        match (cfg.dropout > 0.0, masks) {
            (true, None) => return Err(Error::invalid("dropout is enabled but no mask was given")),
            (false, Some(_)) => return Err(Error::invalid("dropout mask given but dropout is disabled")),
            _ => {}
        }
        if cfg.depth == 0 {
            let out = self.linear(tape, params, "linear", x_enc)?;
            return Ok(FieldOutputs {
                mu_r: out.slice_cols(0, 3),
                sigma_r: softplus_sigma(out.slice_cols(3, 3)),
                mu_alpha: out.slice_cols(6, 1),
                sigma_alpha: softplus_sigma(out.slice_cols(7, 1)),
            });
        }
        let dropout_layers = cfg.dropout_layers();
        let mut h = x_enc;
        for i in 0..cfg.depth {
            if i > 0 && Some(i) == cfg.skip_layer() {
                h = concat(&[h, x_enc], 1);
            }
            h = self.linear(tape, params, &format!("layer{i}"), h)?.relu();
            if let Some(m) = masks {
                if let Some(slot) = dropout_layers.iter().position(|&l| l == i) {
                    let mask = m
                        .masks
                        .get(slot)
                        .ok_or_else(|| Error::invalid("too few dropout masks"))?;
                    h = h * tape.constant(mask.clone());
                }
            }
        }
        let density = self.linear(tape, params, "density", h)?;
        let feature = self.linear(tape, params, "feature", h)?;
        let hidden = self
            .linear(tape, params, "radiance_hidden", concat(&[feature, d_enc], 1))?
            .relu();
        let radiance = self.linear(tape, params, "radiance", hidden)?;
        tape.check()?;
        Ok(FieldOutputs {
            mu_r: radiance.slice_cols(0, 3),
            sigma_r: softplus_sigma(radiance.slice_cols(3, 3)),
            mu_alpha: density.slice_cols(0, 1),
            sigma_alpha: softplus_sigma(density.slice_cols(1, 1)),
        })
    }

    /// Encodes points and unit directions, then runs [`FieldNetwork::forward`].
    pub fn forward_points<'t>(
        &self,
        tape: &'t Tape,
        params: &ParameterSet,
        points: &[[f64; 3]],
        dirs: &[[f64; 3]],
        masks: Option<&DropoutMasks>,
    ) -> Result<FieldOutputs<'t>> {
        let (x_enc, d_enc) = self.encode(points, dirs)?;
        self.forward(tape, params, tape.constant(x_enc), tape.constant(d_enc), masks)
    }

    /// Encoded position and direction tensors for a batch of points.
    pub fn encode(&self, points: &[[f64; 3]], dirs: &[[f64; 3]]) -> Result<(Tensor, Tensor)> {
        if points.len() != dirs.len() || points.is_empty() {
            return Err(Error::invalid(format!(
                "need equal nonzero point/direction counts, got {} and {}",
                points.len(),
                dirs.len()
            )));
        }
        let enc = &self.config.encoding;
        let x = encode_rows(points, enc.l_position, enc.include_raw_input);
        let d = if self.config.dir_dim == 2 {
            let angles: Vec<[f64; 2]> = dirs.iter().map(|d| direction_angles(*d)).collect();
            encode_rows(&angles, enc.l_direction, enc.include_raw_input)
        } else {
            encode_rows(dirs, enc.l_direction, enc.include_raw_input)
        };
        Ok((x, d))
    }

    /// Distribution parameters at one location-direction pair.
    pub fn field_forward(
        &self,
        params: &ParameterSet,
        x: [f64; 3],
        d: [f64; 3],
        masks: Option<&DropoutMasks>,
    ) -> Result<FieldDistributionParams> {
        let tape = Tape::new();
        let out = self.forward_points(&tape, params, &[x], &[d], masks)?;
        tape.check()?;
        let row3 = |v: Var<'_>| {
            let t = v.value();
            [t.data()[0], t.data()[1], t.data()[2]]
        };
        Ok(FieldDistributionParams {
            radiance: LogisticNormalParams::new(row3(out.mu_r), row3(out.sigma_r))?,
            density: RectifiedNormalParams::new(out.mu_alpha.item(), out.sigma_alpha.item())?,
        })
    }
}

/// `(polar, azimuth)` of a unit vector.
pub fn direction_angles(d: [f64; 3]) -> [f64; 2] {
    [d[2].clamp(-1.0, 1.0).acos(), d[1].atan2(d[0])]
}

/// Row indices `0, 0, .., 1, 1, ..` repeating each of `rows` rows `times` times.
pub fn repeat_rows(rows: usize, times: usize) -> Rc<[usize]> {
    (0..rows).flat_map(|r| std::iter::repeat_n(r, times)).collect()
}
