use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::network::{Network, OutputGrad};
use super::optim::{Optimizer, TrainConfig};
use crate::error::{check_len, invalid, Result};
use crate::stopping::EarlyStop;
use crate::{LATENT_DIM, PAYLOAD_LEN};

/// Layer sizes of a stacked autoencoder; the decoder mirrors the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub corruption_rate: f64,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        AutoencoderSpec {
            input_dim: PAYLOAD_LEN,
            hidden: vec![512, 64],
            latent_dim: LATENT_DIM,
            corruption_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLossTrace {
    pub train: Vec<f64>,
    pub valid: Vec<f64>,
}

impl EpochLossTrace {
    pub fn epochs(&self) -> usize {
        self.valid.len()
    }

    fn push(&mut self, train: f64, valid: f64) {
        self.train.push(train);
        self.valid.push(valid);
    }
}

/// Denoising autoencoder: relu hidden layers, linear latent and output.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Network,
    pub decoder: Network,
    pub corruption_rate: f64,
}

impl Autoencoder {
    pub fn new(spec: &AutoencoderSpec, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&spec.corruption_rate) {
            return invalid(format!("corruption rate {} outside [0, 1)", spec.corruption_rate));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![spec.input_dim];
        sizes.extend(&spec.hidden);
        sizes.push(spec.latent_dim);
        let stack = |sizes: &[usize], rng: &mut ChaCha8Rng| -> Result<Network> {
            let n = sizes.len() - 1;
            let layers = (0..n)
                .map(|i| {
                    let act = if i + 1 == n { Activation::Linear } else { Activation::Relu };
                    DenseLayer::init(sizes[i], sizes[i + 1], act, rng)
                })
                .collect();
            Network::new(layers)
        };
        let encoder = stack(&sizes, &mut rng)?;
        sizes.reverse();
        let decoder = stack(&sizes, &mut rng)?;
        Ok(Autoencoder {
            encoder,
            decoder,
            corruption_rate: spec.corruption_rate,
        })
    }

    pub fn from_parts(encoder: Network, decoder: Network, corruption_rate: f64) -> Result<Self> {
        check_len(encoder.out_dim(), decoder.in_dim())?;
        check_len(encoder.in_dim(), decoder.out_dim())?;
        if !(0.0..1.0).contains(&corruption_rate) {
            return invalid(format!("corruption rate {corruption_rate} outside [0, 1)"));
        }
        Ok(Autoencoder {
            encoder,
            decoder,
            corruption_rate,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward_batch(x)
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.decoder.forward_batch(self.encoder.forward_batch(x)?.view())
    }

    /// Continues training from the current weights; this is also the
    /// fine-tuning path. Rows are split 75/25 into train and validation,
    /// and the validation reconstruction loss drives early stopping.
    pub fn fit(&mut self, data: ArrayView2<f64>, cfg: &TrainConfig, stop: &EarlyStop) -> Result<EpochLossTrace> {
        cfg.validate()?;
        if data.nrows() == 0 {
            return invalid("autoencoder training data is empty");
        }
        check_len(self.input_dim(), data.ncols())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (mut train_idx, valid_idx) = train_valid_split(data.nrows(), &mut rng);
        let valid = data.select(Axis(0), &valid_idx);

        let enc_layers = self.encoder.layers().len();
        let mut layers = self.encoder.clone().into_layers();
        layers.extend(self.decoder.clone().into_layers());
        let mut net = Network::new(layers)?;
        let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net);
        let mut monitor = stop.monitor();
        let mut trace = EpochLossTrace::default();

        for _ in 0..cfg.max_epochs {
            train_idx.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in train_idx.chunks(cfg.batch_size) {
                let clean = data.select(Axis(0), batch);
                let mut noisy = clean.clone();
                corrupt(noisy.view_mut(), self.corruption_rate, &mut rng);
                let acts = net.forward_trace(noisy.view())?;
                let out = acts.last().unwrap();
                let diff = out - &clean;
                total += diff.iter().map(|d| d * d).sum::<f64>() / clean.ncols() as f64;
                let scale = 2.0 / diff.len() as f64;
                let (grads, _) = net.backward(&acts, OutputGrad::Output(diff * scale))?;
                opt.apply(&mut net, &grads);
            }
            let train_loss = total / train_idx.len() as f64;
            let recon = net.forward_batch(valid.view())?;
            let valid_loss = batch_mse(&recon, &valid);
            trace.push(train_loss, valid_loss);
            if monitor.observe(valid_loss) {
                break;
            }
        }

        let mut layers = net.into_layers();
        let dec = layers.split_off(enc_layers);
        self.encoder = Network::new(layers)?;
        self.decoder = Network::new(dec)?;
        Ok(trace)
    }
}

pub fn train_autoencoder(
    data: ArrayView2<f64>,
    spec: &AutoencoderSpec,
    cfg: &TrainConfig,
    stop: &EarlyStop,
) -> Result<(Autoencoder, EpochLossTrace)> {
    let mut ae = Autoencoder::new(spec, cfg.seed)?;
    let trace = ae.fit(data, cfg, stop)?;
    Ok((ae, trace))
}

/// Zeroes each entry independently with probability `rate`; returns how
/// many entries were zeroed.
pub fn corrupt<R: Rng>(mut x: ndarray::ArrayViewMut2<f64>, rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let mut zeroed = 0;
    for v in x.iter_mut() {
        if rng.gen::<f64>() < rate {
            *v = 0.0;
            zeroed += 1;
        }
    }
    zeroed
}

/// Shuffled 75/25 partition. A single row serves as both halves.
pub(crate) fn train_valid_split<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    if n < 2 {
        return (idx.clone(), idx);
    }
    let n_train = ((n as f64) * 0.75).round().clamp(1.0, (n - 1) as f64) as usize;
    let valid = idx.split_off(n_train);
    (idx, valid)
}

pub(crate) fn batch_mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}
