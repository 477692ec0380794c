use ndarray::{Array2, ArrayView2, Axis};

use super::tree::Tree;
use super::{softmax_grad_hess, BoostParams};
use crate::error::{check_len, invalid, Result};
use crate::nn::{argmax, softmax_in_place};

/// One tree per class per boosting round.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub class_count: usize,
    pub n_features: usize,
    pub base_score: f64,
    pub params: BoostParams,
}

impl TreeEnsemble {
    pub fn empty(class_count: usize, n_features: usize, params: BoostParams) -> Self {
        TreeEnsemble {
            trees: Vec::new(),
            class_count,
            n_features,
            base_score: 0.0,
            params,
        }
    }

    pub fn rounds(&self) -> usize {
        self.trees.len() / self.class_count.max(1)
    }

    /// Raw per-class scores: base score plus leaf weights, summed in tree order.
    pub fn margins(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_features, z.len())?;
        let mut m = vec![self.base_score; self.class_count];
        for t in &self.trees {
            m[t.class] += t.predict(z);
        }
        Ok(m)
    }

    pub fn predict_proba(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut m = self.margins(z)?;
        softmax_in_place(&mut m);
        Ok(m)
    }

    pub fn margins_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len(self.n_features, x.ncols())?;
        let mut m = Array2::from_elem((x.nrows(), self.class_count), self.base_score);
        for (row, mut out) in x.rows().into_iter().zip(m.rows_mut()) {
            let row = row.to_vec();
            for t in &self.trees {
                out[t.class] += t.predict(&row);
            }
        }
        Ok(m)
    }

    pub fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut m = self.margins_batch(x)?;
        for mut row in m.rows_mut() {
            softmax_in_place(row.as_slice_mut().unwrap());
        }
        Ok(m)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba_batch(x)?
            .axis_iter(Axis(0))
            .map(|r| argmax(r.as_slice().unwrap()))
            .collect())
    }

    /// Cumulative split gain per feature; unused features are 0.
    pub fn feature_gain(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for t in &self.trees {
            for (f, g) in t.splits() {
                out[f] += g;
            }
        }
        out
    }

    fn boost(&mut self, x: ArrayView2<f64>, labels: &[usize], params: &BoostParams, rounds: usize) -> Result<Vec<f64>> {
        let mut margins = self.margins_batch(x)?;
        let mut trace = Vec::with_capacity(rounds + 1);
        trace.push(log_loss(&margins, labels));
        for _ in 0..rounds {
            let gh = softmax_grad_hess(labels, margins.view());
            let mut round = Vec::with_capacity(self.class_count);
            for c in 0..self.class_count {
                let g = gh.g.column(c).to_vec();
                let h = gh.h.column(c).to_vec();
                round.push(Tree::fit(x, &g, &h, params, c));
            }
            for (row, mut m) in x.rows().into_iter().zip(margins.rows_mut()) {
                let row = row.to_vec();
                for t in &round {
                    m[t.class] += t.predict(&row);
                }
            }
            self.trees.extend(round);
            trace.push(log_loss(&margins, labels));
        }
        Ok(trace)
    }
}

fn log_loss(margins: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in margins.rows().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|m| (m - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len().max(1) as f64
}

fn check_labels(x: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    check_len(x.nrows(), labels.len())?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return invalid(format!("label {bad} outside [0, {n_classes})"));
    }
    Ok(())
}

/// Returns the model and the training log-loss before round 1 and after
/// every round.
pub fn train_traced(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    params: &BoostParams,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    params.validate()?;
    check_labels(x, labels, n_classes)?;
    if n_classes < 2 || labels.iter().all(|&y| y == labels[0]) {
        return invalid("boosting needs at least two distinct classes in the data");
    }
    let mut model = TreeEnsemble::empty(n_classes, x.ncols(), *params);
    let trace = model.boost(x, labels, params, params.rounds)?;
    Ok((model, trace))
}

pub fn train(x: ArrayView2<f64>, labels: &[usize], n_classes: usize, params: &BoostParams) -> Result<TreeEnsemble> {
    Ok(train_traced(x, labels, n_classes, params)?.0)
}

/// Appends `extra_rounds` rounds fit from the loaded model's margins on
/// the new data. Existing trees and the stored params are left untouched.
pub fn continue_training_traced(
    model: &TreeEnsemble,
    x: ArrayView2<f64>,
    labels: &[usize],
    params: &BoostParams,
    extra_rounds: usize,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    params.validate()?;
    check_len(model.n_features, x.ncols())?;
    check_labels(x, labels, model.class_count)?;
    let mut out = model.clone();
    let trace = out.boost(x, labels, params, extra_rounds)?;
    Ok((out, trace))
}

pub fn continue_training(
    model: &TreeEnsemble,
    x: ArrayView2<f64>,
    labels: &[usize],
    params: &BoostParams,
    extra_rounds: usize,
) -> Result<TreeEnsemble> {
    Ok(continue_training_traced(model, x, labels, params, extra_rounds)?.0)
}
