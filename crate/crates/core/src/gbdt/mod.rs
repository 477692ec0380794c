//! Gradient-boosted decision trees for multiclass softmax loss.
//!
//! Splits are found by exact greedy search over midpoints of consecutive
//! distinct feature values, scored with the L2-regularized second-order
//! gain. Every internal node keeps its gain and every node its gradient and
//! Hessian sums, so per-feature cumulative gain can be read off the model.

mod ensemble;
mod persist;
mod tree;

pub use ensemble::{continue_training, continue_training_traced, train, train_traced, TreeEnsemble};
pub use persist::GBDT_MAGIC;
pub use tree::{build_tree, Node, NodeKind, Tree};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub min_child_hessian: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            lambda: 1.0,
            gamma: 0.0,
            learning_rate: 0.3,
            max_depth: 6,
            rounds: 50,
            min_child_hessian: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) || !(self.min_child_hessian >= 0.0) {
            return invalid("lambda, gamma and min_child_hessian must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return invalid(format!("learning rate {} outside (0, 1]", self.learning_rate));
        }
        Ok(())
    }
}

/// Per-sample, per-class first and second derivatives of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub g: Array2<f64>,
    pub h: Array2<f64>,
}

/// For p = softmax(margin row): g = p − onehot(y), h = p(1 − p).
pub fn softmax_grad_hess(labels: &[usize], margins: ArrayView2<f64>) -> GradHess {
    let mut g = margins.to_owned();
    for mut row in g.rows_mut() {
        crate::nn::softmax_in_place(row.as_slice_mut().unwrap());
    }
    let h = g.mapv(|p| p * (1.0 - p));
    for (i, &y) in labels.iter().enumerate() {
        g[[i, y]] -= 1.0;
    }
    GradHess { g, h }
}

/// ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &BoostParams) -> f64 {
    let l = params.lambda;
    let score = |g: f64, h: f64| if h + l > 0.0 { g * g / (h + l) } else { 0.0 };
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - params.gamma
}

/// Shrunken Newton step −G/(H+λ)·η.
pub fn leaf_weight(g: f64, h: f64, params: &BoostParams) -> f64 {
    let d = h + params.lambda;
    if d > 0.0 {
        -g / d * params.learning_rate
    } else {
        0.0
    }
}
