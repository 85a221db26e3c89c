//! Adam optimiser.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};

use super::model::{Grads, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(model: &Model, cfg: AdamConfig) -> Adam {
        Adam { cfg, step: 0, m: model.zero_grads(), v: model.zero_grads() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update.
    pub fn step(&mut self, model: &mut Model, grads: &Grads) -> Result<()> {
        if grads.len() != model.tensors.len() || grads.iter().zip(&model.tensors).any(|(g, t)| g.len() != t.data.len()) {
            return Err(shape("gradient layout differs from the model"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((t, g), m), v) in model.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                t.data[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::ArchConfig;

    fn small() -> Model {
        let arch = ArchConfig {
            n_freq: 9,
            kernel: 3,
            sc_channels: 2,
            sc_hidden: 2,
            sc_dilations: vec![1],
            sc_pool: 3,
            ic_channels: 2,
            ic_hidden: 2,
            ic_dilations: vec![1],
            ic_pool: 2,
            dense: vec![4],
            n_targets: 2,
            ..ArchConfig::default()
        };
        Model::new(arch, 7).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = small();
        let before = m.clone();
        let mut opt = Adam::new(&m, AdamConfig::default());
        let zero = m.zero_grads();
        opt.step(&mut m, &zero).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut m = small();
        let before = m.clone();
        let mut g = m.zero_grads();
        for (k, gi) in g.iter_mut().enumerate() {
            for (i, v) in gi.iter_mut().enumerate() {
                *v = if (i + k) % 2 == 0 { 0.3 + i as f64 } else { -2.0 };
            }
        }
        let mut opt = Adam::new(&m, AdamConfig::default());
        opt.step(&mut m, &g).unwrap();
        for ((a, b), gi) in m.tensors.iter().zip(&before.tensors).zip(&g) {
            for i in 0..gi.len() {
                let moved = a.data[i] - b.data[i];
                assert!((moved + 1e-4 * gi[i].signum()).abs() < 1e-9, "{moved}");
            }
        }
        assert!(opt.step(&mut m, &vec![vec![0.0; 1]]).is_err());
    }
}
