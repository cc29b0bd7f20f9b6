//! Flat `key=value` run configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{BaselineConfig, CorrelationKind, EvalConfig, MethodId};
use crate::field::{FieldNetworkConfig, PositionalEncodingConfig};
use crate::render::Integrator;
use crate::scene::DatasetSpec;
use crate::train::{AdamConfig, LossConfig, TrainConfig};

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::invalid(format!("bad value `{value}` for `{key}`: {e}")))
}

macro_rules! run_config {
    ($($(#[$doc:meta])* $field:ident: $ty:ty = $default:expr,)*) => {
        /// Every knob of every command. Unknown keys are rejected.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[$doc])* pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => self.$field = parse_value(key, value)?,)*
                    _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            /// One `key=value` line per field, in declaration order.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(s.push_str(&format!("{}={}\n", stringify!($field), self.$field));)*
                s
            }
        }
    };
}

run_config! {
    /// Dataset directory.
    scene: String = String::new(),
    checkpoint: String = String::new(),
    out: String = String::new(),
    seed: u64 = 0,
    method: MethodId = MethodId::Snerf,
    /// Analytic scene generated by `make-scene`.
    scene_name: String = "slab".to_string(),
    views: usize = 25,
    image_width: usize = 64,
    image_height: usize = 64,
    fov: f64 = 0.7,
    oracle_points: usize = 1024,
    dataset_seed: u64 = 0,
    steps: u64 = 3000,
    batch_rays: usize = 64,
    n_samples: usize = 64,
    k_samples: usize = 16,
    sigma_c: f64 = 1.0,
    kl_weight: f64 = 1e-2,
    grid_points_per_axis: usize = 4,
    kl_mc_samples: usize = 1,
    lr: f64 = 5e-4,
    lr_decay_rate: f64 = 0.1,
    lr_decay_steps: f64 = 250_000.0,
    checkpoint_every: u64 = 0,
    width: usize = 64,
    depth: usize = 4,
    /// Trunk layer re-fed the encoded position; 0 disables the skip.
    skip: usize = 2,
    l_position: usize = 6,
    l_direction: usize = 2,
    ensemble_size: usize = 5,
    dropout_passes: usize = 5,
    dropout_rate: f64 = 0.2,
    train_fraction: f64 = 0.8,
    split_seed: u64 = 0,
    render_seed: u64 = 0,
    max_test_views: usize = 0,
    correlation: CorrelationKind = CorrelationKind::Pearson,
    chunk_rays: usize = 256,
    /// Integrator used by `render` for stochastic-field methods.
    integrator: Integrator = Integrator::Trapezoidal,
    /// View rendered by `render`.
    view: usize = 0,
    workers: usize = 1,
}

/// Named starting points applied before config files and flags.
pub const PRESETS: &[&str] = &["default", "toy"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        match name {
            "default" => {}
            "toy" => {
                let toy = EvalConfig::toy();
                cfg.width = toy.network.width;
                cfg.steps = toy.train.steps;
                cfg.lr = toy.train.adam.lr;
                cfg.sigma_c = toy.train.loss.sigma_c;
                cfg.max_test_views = toy.max_test_views;
            }
            _ => return Err(Error::invalid(format!("unknown preset `{name}` (expected one of {PRESETS:?})"))),
        }
        Ok(cfg)
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    /// Returns the keys that were set.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<Vec<String>> {
        let mut keys = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(|e| parse_err(e.to_string()))?;
            keys.push(k.trim().to_string());
        }
        Ok(keys)
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, path)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn network(&self) -> FieldNetworkConfig {
        FieldNetworkConfig {
            width: self.width,
            depth: self.depth,
            skip: (self.skip > 0).then_some(self.skip),
            dropout: 0.0,
            encoding: PositionalEncodingConfig {
                l_position: self.l_position,
                l_direction: self.l_direction,
                include_raw_input: true,
            },
            dir_dim: 3,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            network: self.network(),
            train: TrainConfig {
                loss: LossConfig {
                    k_samples: self.k_samples,
                    n_samples: self.n_samples,
                    sigma_c: self.sigma_c,
                    kl_weight: self.kl_weight,
                    grid_points_per_axis: self.grid_points_per_axis,
                    kl_mc_samples: self.kl_mc_samples,
                    scene_kl_enabled: true,
                    observed_ray_kl_enabled: true,
                },
                adam: AdamConfig {
                    lr: self.lr,
                    decay_rate: self.lr_decay_rate,
                    decay_steps: self.lr_decay_steps,
                    ..AdamConfig::default()
                },
                batch_rays: self.batch_rays,
                steps: self.steps,
                checkpoint_every: self.checkpoint_every,
                seed: self.seed,
                ..TrainConfig::default()
            },
            baseline: BaselineConfig {
                ensemble_size: self.ensemble_size,
                dropout_passes: self.dropout_passes,
                dropout_rate: self.dropout_rate,
            },
            train_fraction: self.train_fraction,
            split_seed: self.split_seed,
            render_seed: self.render_seed,
            max_test_views: self.max_test_views,
            correlation: self.correlation,
            chunk_rays: self.chunk_rays,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_views: self.views,
            width: self.image_width,
            height: self.image_height,
            fov: self.fov,
            rig: None,
            oracle_points: self.oracle_points,
        }
    }

    /// Checks everything that does not need the file system.
    pub fn validate(&self) -> Result<()> {
        let eval = self.eval_config();
        eval.network_config(self.method).validate()?;
        eval.train.loss.validate()?;
        eval.baseline.validate(self.method)?;
        if self.workers == 0 || self.batch_rays == 0 || self.chunk_rays == 0 {
            return Err(Error::invalid("workers, batch_rays and chunk_rays must be >= 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}
