//! Fully connected softmax classifier over raw payload features.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::autoencoder::EpochLossTrace;
use super::layer::{Activation, DenseLayer};
use super::network::{Network, OutputGrad};
use super::optim::{Optimizer, TrainConfig};
use crate::error::{invalid, Result};

const CE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FcnnClassifier {
    pub net: Network,
}

impl FcnnClassifier {
    pub fn class_count(&self) -> usize {
        self.net.out_dim()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.net.forward_batch(x)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.axis_iter(Axis(0)).map(|r| argmax(r.as_slice().unwrap())).collect())
    }
}

/// `layers` lists every layer width after the input; the last must equal
/// `n_classes`. Hidden layers are relu, the output softmax. The trace's
/// validation column is the post-epoch loss over the full training set.
pub fn train_fcnn(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    layers: &[usize],
    cfg: &TrainConfig,
) -> Result<(FcnnClassifier, EpochLossTrace)> {
    cfg.validate()?;
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return invalid(format!("{} rows but {} labels", x.nrows(), labels.len()));
    }
    if layers.last() != Some(&n_classes) {
        return invalid(format!("final layer {:?} must equal class count {n_classes}", layers.last()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return invalid(format!("label {bad} outside [0, {n_classes})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![x.ncols()];
    sizes.extend_from_slice(layers);
    let n = layers.len();
    let net_layers = (0..n)
        .map(|i| {
            let act = if i + 1 == n { Activation::Softmax } else { Activation::Relu };
            DenseLayer::init(sizes[i], sizes[i + 1], act, &mut rng)
        })
        .collect();
    let mut net = Network::new(net_layers)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut trace = EpochLossTrace::default();
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let acts = net.forward_trace(xb.view())?;
            let mut delta = acts.last().unwrap().clone();
            for (r, &i) in batch.iter().enumerate() {
                total -= (delta[[r, labels[i]]] + CE_EPS).ln();
                delta[[r, labels[i]]] -= 1.0;
            }
            delta /= batch.len() as f64;
            let (grads, _) = net.backward(&acts, OutputGrad::PreActivation(delta))?;
            opt.apply(&mut net, &grads);
        }
        let probs = net.forward_batch(x)?;
        let full = cross_entropy(&probs, labels);
        trace.train.push(total / x.nrows() as f64);
        trace.valid.push(full);
    }
    Ok((FcnnClassifier { net }, trace))
}

pub(crate) fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let s: f64 = labels.iter().enumerate().map(|(i, &y)| -(probs[[i, y]] + CE_EPS).ln()).sum();
    s / labels.len() as f64
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let c = if labels[i] == 0 { -1.0 } else { 1.0 };
            c + rng.gen_range(-0.5..0.5)
        });
        (x, labels)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(100, 1);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 10,
            max_epochs: 30,
            seed: 2,
            ..TrainConfig::default()
        };
        let (clf, _) = train_fcnn(x.view(), &y, 2, &[8, 2], &cfg).unwrap();
        let pred = clf.predict(x.view()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
        for row in clf.predict_proba(x.view()).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_data_predicts_that_class() {
        let (x, _) = blobs(30, 3);
        let y = vec![1usize; 30];
        let cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 20,
            batch_size: 10,
            ..TrainConfig::default()
        };
        let (clf, _) = train_fcnn(x.view(), &y, 2, &[4, 2], &cfg).unwrap();
        assert!(clf.predict(x.view()).unwrap().iter().all(|&p| p == 1));
    }

    #[test]
    fn out_of_range_label_rejected() {
        let (x, mut y) = blobs(10, 3);
        y[0] = 5;
        assert!(train_fcnn(x.view(), &y, 2, &[2], &TrainConfig::default()).is_err());
        assert!(train_fcnn(x.view(), &[0; 10], 2, &[3], &TrainConfig::default()).is_err());
    }
}
