use indexmap::IndexMap;

use crate::autodiff::{ParameterSet, Tensor};
use crate::error::{Error, Result};

/// Adam with learning rate `lr * decay_rate^(step / decay_steps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_rate: 0.1,
            decay_steps: 250_000.0,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
}

const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";
const STEP_NAME: &str = "adam.step";

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn learning_rate(&self, cfg: &AdamConfig) -> f64 {
        cfg.lr * cfg.decay_rate.powf(self.step as f64 / cfg.decay_steps)
    }

    /// One update from the gradients stored in `params`.
    pub fn apply(&mut self, cfg: &AdamConfig, params: &mut ParameterSet) -> Result<()> {
        let lr = self.learning_rate(cfg);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.value.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.value.shape()));
            if m.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: m.shape().to_vec(),
                    rhs: p.value.shape().to_vec(),
                });
            }
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g[i];
                vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                *w -= lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Moments and step as named tensors for a checkpoint.
    pub fn to_tensors(&self) -> ParameterSet {
        let mut ps = ParameterSet::new();
        ps.insert(STEP_NAME, Tensor::scalar(self.step as f64));
        for (k, t) in &self.m {
            ps.insert(format!("{M_PREFIX}{k}"), t.clone());
        }
        for (k, t) in &self.v {
            ps.insert(format!("{V_PREFIX}{k}"), t.clone());
        }
        ps
    }

    /// Inverse of [`OptimizerState::to_tensors`]; ignores unrelated entries.
    pub fn from_tensors(ps: &ParameterSet) -> Self {
        let step = ps.value(STEP_NAME).map_or(0, |t| t.item() as u64);
        let pick = |prefix: &str| {
            ps.iter()
                .filter_map(|(k, p)| k.strip_prefix(prefix).map(|n| (n.to_string(), p.value.clone())))
                .collect()
        };
        Self {
            step,
            m: pick(M_PREFIX),
            v: pick(V_PREFIX),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParameterSet::new();
        ps.insert("w", Tensor::row(vec![1.0, -1.0]));
        ps.get_mut("w").unwrap().grad = Tensor::row(vec![3.0, -0.5]);
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::new();
        st.apply(&cfg, &mut ps).unwrap();
        let w = ps.value("w").unwrap().data();
        assert!((w[0] - (1.0 - 5e-4)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 5e-4)).abs() < 1e-9);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn decay_schedule() {
        let cfg = AdamConfig {
            decay_steps: 100.0,
            ..AdamConfig::default()
        };
        let st = OptimizerState {
            step: 100,
            ..OptimizerState::default()
        };
        assert!((st.learning_rate(&cfg) - 5e-5).abs() < 1e-15);
    }

    #[test]
    fn tensors_round_trip() {
        let mut ps = ParameterSet::new();
        ps.insert("a", Tensor::row(vec![0.5]));
        ps.get_mut("a").unwrap().grad = Tensor::row(vec![0.1]);
        let mut st = OptimizerState::new();
        st.apply(&AdamConfig::default(), &mut ps).unwrap();
        assert_eq!(OptimizerState::from_tensors(&st.to_tensors()), st);
    }
}
