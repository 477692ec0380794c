use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::layer::{Activation, DenseLayer};
use crate::error::{check_len, invalid, Error, Result};

/// Gradient of a scalar loss with respect to every layer's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Where the upstream gradient enters the last layer.
pub enum OutputGrad {
    /// dL/d(output), chained through the final activation.
    Output(Array2<f64>),
    /// dL/d(pre-activation) of the final layer, e.g. softmax fused with
    /// cross-entropy.
    PreActivation(Array2<f64>),
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("network needs at least one layer");
        }
        for (i, l) in layers.iter().enumerate() {
            check_len(l.out_dim(), l.bias.len())?;
            if i + 1 < layers.len() {
                if l.activation == Activation::Softmax {
                    return invalid("softmax is only allowed on the final layer");
                }
                check_len(l.out_dim(), layers[i + 1].in_dim())?;
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.in_dim(), x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len(self.in_dim(), x.ncols())?;
        let mut a = self.layers[0].forward_batch(x);
        for l in &self.layers[1..] {
            a = l.forward_batch(a.view());
        }
        Ok(a)
    }

    /// Forward pass keeping every layer output; element 0 is the input.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        check_len(self.in_dim(), x.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for l in &self.layers {
            let next = l.forward_batch(acts.last().unwrap().view());
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates through a trace from [`Network::forward_trace`].
    /// Returns parameter gradients and dL/d(input).
    pub fn backward(&self, acts: &[Array2<f64>], upstream: OutputGrad) -> Result<(Gradients, Array2<f64>)> {
        if acts.len() != self.layers.len() + 1 {
            return Err(Error::Shape {
                expected: self.layers.len() + 1,
                got: acts.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = match upstream {
            OutputGrad::PreActivation(d) => d,
            OutputGrad::Output(g) => activation_backward(self.layers[last].activation, &acts[last + 1], g),
        };
        for i in (0..self.layers.len()).rev() {
            if i < last {
                delta = activation_backward(self.layers[i].activation, &acts[i + 1], delta);
            }
            let dw = delta.t().dot(&acts[i]);
            let db = delta.sum_axis(Axis(0));
            let d_in = delta.dot(&self.layers[i].weights);
            grads.push((dw, db));
            delta = d_in;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }
}

fn activation_backward(act: Activation, out: &Array2<f64>, mut g: Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Linear => g,
        Activation::Relu => {
            g.zip_mut_with(out, |gv, &o| {
                if o <= 0.0 {
                    *gv = 0.0
                }
            });
            g
        }
        Activation::Softmax => {
            for (mut grow, orow) in g.axis_iter_mut(Axis(0)).zip(out.axis_iter(Axis(0))) {
                let dot: f64 = grow.iter().zip(orow.iter()).map(|(a, b)| a * b).sum();
                grow.zip_mut_with(&orow, |gv, &p| *gv = p * (*gv - dot));
            }
            g
        }
    }
}
