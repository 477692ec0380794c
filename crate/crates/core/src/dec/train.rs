use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{assign, init_centroids};
use super::{
    contrastive_loss, dec_loss_parts, dist, one_hot, soft_assign_batch, sq_dist, target_distribution, Centroids,
    DecLoss, ALPHA, CE_EPS,
};
use crate::error::{check_len, invalid, Result};
use crate::nn::{
    Activation, Autoencoder, DenseLayer, EpochLossTrace, Gradients, Network, Optimizer, OutputGrad, TrainConfig,
};
use crate::stopping::EarlyStop;

/// Encoder plus clustering layer. Cluster j stands for class j.
#[derive(Debug, Clone, PartialEq)]
pub struct DecModel {
    pub encoder: Network,
    pub centroids: Centroids,
    pub class_count: usize,
}

/// Embeddings with the labels of the rows they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub z: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Loss and its gradients with respect to the embeddings and centroids.
#[derive(Debug, Clone)]
pub struct DecGradients {
    pub loss: DecLoss,
    pub dz: Array2<f64>,
    pub du: Array2<f64>,
}

/// Composite loss on a batch of embeddings where the soft assignment doubles
/// as the class prediction. `p` is held fixed.
pub fn dec_loss_grad(
    z: ArrayView2<f64>,
    c: &Centroids,
    p: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<DecGradients> {
    let q = soft_assign_batch(z, c)?;
    let loss = dec_loss_parts(p, q.view(), c, y, q.view())?;
    let (n, k) = (z.nrows(), c.count());
    let u = c.matrix();
    let mut dz = Array2::zeros(z.raw_dim());
    let mut du = Array2::zeros(u.raw_dim());
    let mut a = vec![0.0; k];
    for i in 0..n {
        // dL/d ln q_ij for the KL and CE terms
        for j in 0..k {
            let qij = q[[i, j]];
            a[j] = -(p[[i, j]] + y[[i, j]] * qij / (qij + CE_EPS)) / n as f64;
        }
        let a_sum: f64 = a.iter().sum();
        for j in 0..k {
            let b = a[j] - q[[i, j]] * a_sum;
            let d2 = sq_dist(z.row(i), u.row(j));
            let g = -b * (ALPHA + 1.0) / (ALPHA + d2);
            for t in 0..z.ncols() {
                let diff = z[[i, t]] - u[[j, t]];
                dz[[i, t]] += g * diff;
                du[[j, t]] -= g * diff;
            }
        }
    }
    // contrastive term: C = n(n-1)/S over ordered pairs
    let s: f64 = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| dist(u.row(i), u.row(j)))
        .sum();
    let coef = -contrastive_loss(c)? / s * 2.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = dist(u.row(i), u.row(j));
            for t in 0..u.ncols() {
                du[[i, t]] += coef * (u[[i, t]] - u[[j, t]]) / d;
            }
        }
    }
    Ok(DecGradients { loss, dz, du })
}

impl DecModel {
    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward_batch(x)
    }

    pub fn transform_labeled(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<LatentSet> {
        check_len(x.nrows(), labels.len())?;
        Ok(LatentSet {
            z: self.transform(x)?,
            labels: labels.to_vec(),
        })
    }

    pub fn soft_assign(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        soft_assign_batch(self.transform(x)?.view(), &self.centroids)
    }

    /// Loss on `x` plus gradients for the encoder parameters and centroids.
    pub fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        p: ArrayView2<f64>,
    ) -> Result<(DecLoss, Gradients, Array2<f64>)> {
        let acts = self.encoder.forward_trace(x)?;
        let g = dec_loss_grad(acts.last().unwrap().view(), &self.centroids, p, y)?;
        let (enc_grads, _) = self.encoder.backward(&acts, OutputGrad::Output(g.dz))?;
        Ok((g.loss, enc_grads, g.du))
    }

    /// Loss with the target computed from the current assignments of `x`.
    pub fn evaluate_loss(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<DecLoss> {
        let q = self.soft_assign(x)?;
        let p = target_distribution(q.view());
        let y = one_hot(labels, self.class_count)?;
        dec_loss_parts(p.view(), q.view(), &self.centroids, y.view(), q.view())
    }

    /// Joint refinement of encoder and centroids; also the fine-tuning
    /// path. Rows are split 75/25; the target distribution is refreshed at
    /// the start of every epoch and validation loss drives early stopping.
    pub fn refine(
        &mut self,
        x: ArrayView2<f64>,
        labels: &[usize],
        cfg: &TrainConfig,
        stop: &EarlyStop,
    ) -> Result<EpochLossTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (train_idx, valid_idx) = crate::nn::train_valid_split(x.nrows(), &mut rng);
        self.refine_split(x, labels, train_idx, valid_idx, cfg, stop, &mut rng)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine_split(
        &mut self,
        x: ArrayView2<f64>,
        labels: &[usize],
        train_idx: Vec<usize>,
        valid_idx: Vec<usize>,
        cfg: &TrainConfig,
        stop: &EarlyStop,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochLossTrace> {
        cfg.validate()?;
        check_len(x.nrows(), labels.len())?;
        let y_all = one_hot(labels, self.class_count)?;
        let x_train = x.select(Axis(0), &train_idx);
        let y_train = y_all.select(Axis(0), &train_idx);
        let x_valid = x.select(Axis(0), &valid_idx);
        let y_valid: Vec<usize> = valid_idx.iter().map(|&i| labels[i]).collect();

        let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &self.encoder);
        let mut cent = Network::new(vec![DenseLayer {
            weights: self.centroids.matrix().clone(),
            bias: Array1::zeros(self.centroids.count()),
            activation: Activation::Linear,
        }])?;
        let mut cent_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &cent);
        let mut monitor = stop.monitor();
        let mut trace = EpochLossTrace::default();
        let mut order: Vec<usize> = (0..train_idx.len()).collect();

        for _ in 0..cfg.max_epochs {
            let q = self.soft_assign(x_train.view())?;
            let p = target_distribution(q.view());
            order.shuffle(rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let xb = x_train.select(Axis(0), batch);
                let yb = y_train.select(Axis(0), batch);
                let pb = p.select(Axis(0), batch);
                let (loss, enc_grads, du) = self.loss_and_grads(xb.view(), yb.view(), pb.view())?;
                total += loss.total() * batch.len() as f64;
                enc_opt.apply(&mut self.encoder, &enc_grads);
                let cg = Gradients {
                    layers: vec![(du, Array1::zeros(self.centroids.count()))],
                };
                cent_opt.apply(&mut cent, &cg);
                self.centroids.matrix_mut().assign(&cent.layers()[0].weights);
            }
            let valid_loss = self.evaluate_loss(x_valid.view(), &y_valid)?.total();
            trace.train.push(total / train_idx.len() as f64);
            trace.valid.push(valid_loss);
            if !valid_loss.is_finite() {
                return Err(crate::Error::Numerical("clustering loss diverged".into()));
            }
            if monitor.observe(valid_loss) {
                break;
            }
        }
        Ok(trace)
    }
}

/// Discards the decoder, seeds centroids with k-means on the encoded
/// training rows (one per class, matched to classes by majority vote), then
/// refines encoder and centroids jointly.
pub fn train_dec(
    ae: &Autoencoder,
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
    stop: &EarlyStop,
) -> Result<(DecModel, EpochLossTrace)> {
    if n_classes < 2 {
        return invalid(format!("clustering needs at least 2 classes, got {n_classes}"));
    }
    check_len(x.nrows(), labels.len())?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return invalid(format!("label {bad} outside [0, {n_classes})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, valid_idx) = crate::nn::train_valid_split(x.nrows(), &mut rng);
    let z_train = ae.encode_batch(x.select(Axis(0), &train_idx).view())?;
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let raw = init_centroids(z_train.view(), n_classes, cfg.seed)?;
    let centroids = align_to_labels(&raw, z_train.view(), &train_labels, n_classes)?;
    let mut model = DecModel {
        encoder: ae.encoder.clone(),
        centroids,
        class_count: n_classes,
    };
    let trace = model.refine_split(x, labels, train_idx, valid_idx, cfg, stop, &mut rng)?;
    Ok((model, trace))
}

/// Reorders centroids so row j sits on the cluster most populated by class
/// j, greedily taking the largest (cluster, class) overlap first.
fn align_to_labels(c: &Centroids, z: ArrayView2<f64>, labels: &[usize], k: usize) -> Result<Centroids> {
    let mut counts = vec![vec![0usize; k]; k];
    for (cl, &y) in assign(z, c).into_iter().zip(labels) {
        counts[cl][y] += 1;
    }
    let mut cluster_for = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for (cl, row) in counts.iter().enumerate() {
            if used[cl] {
                continue;
            }
            for (class, &n) in row.iter().enumerate() {
                if cluster_for[class] != usize::MAX {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| n > b) {
                    best = Some((cl, class, n));
                }
            }
        }
        let (cl, class, _) = best.expect("k clusters for k classes");
        used[cl] = true;
        cluster_for[class] = cl;
    }
    Centroids::new(c.matrix().select(Axis(0), &cluster_for))
}
