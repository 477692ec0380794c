use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 20,
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return invalid("batch size must be >= 1");
        }
        if self.max_epochs == 0 {
            return invalid("max_epochs must be >= 1");
        }
        Ok(())
    }
}

type Moments = Vec<(Array2<f64>, Array1<f64>)>;

/// Optimizer state for one network.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Moments,
    v: Moments,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, net: &Network) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
                .collect::<Moments>()
        };
        Optimizer {
            kind,
            lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn apply(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (l, (gw, gb)) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    l.weights.scaled_add(-self.lr, gw);
                    l.bias.scaled_add(-self.lr, gb);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let step_size = self.lr / c1;
                let upd = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= step_size * *m / ((*v / c2).sqrt() + eps);
                };
                for (i, l) in net.layers_mut().iter_mut().enumerate() {
                    let (gw, gb) = &grads.layers[i];
                    let (mw, mb) = &mut self.m[i];
                    let (vw, vb) = &mut self.v[i];
                    Zip::from(&mut l.weights).and(gw).and(mw).and(vw).for_each(upd);
                    Zip::from(&mut l.bias).and(gb).and(mb).and(vb).for_each(upd);
                }
            }
        }
    }
}
