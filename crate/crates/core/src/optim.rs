//! First-order optimizers over the flat parameter vector of a [`ModelParams`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = match *self {
            OptimizerConfig::Sgd { lr } => lr,
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
                    return Err(Error::config("Adam betas must lie in [0, 1)"));
                }
                if !(eps > 0.0) {
                    return Err(Error::config("Adam eps must be positive"));
                }
                lr
            }
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &ModelParams) -> Self {
        let n = match cfg {
            OptimizerConfig::Sgd { .. } => 0,
            OptimizerConfig::Adam { .. } => params.param_count(),
        };
        Self {
            cfg,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let mut offset = 0;
        for (layer, g) in params.layers.iter_mut().zip(&grads.layers) {
            let w = layer.weights.as_mut_slice();
            self.update(&mut offset, w, g.weights.as_slice());
            self.update(&mut offset, &mut layer.biases, &g.biases);
        }
    }

    fn update(&mut self, offset: &mut usize, p: &mut [f64], g: &[f64]) {
        match self.cfg {
            OptimizerConfig::Sgd { lr } => {
                for (w, d) in p.iter_mut().zip(g) {
                    *w -= lr * d;
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let m = &mut self.m[*offset..*offset + p.len()];
                let v = &mut self.v[*offset..*offset + p.len()];
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        *offset += p.len();
    }
}
