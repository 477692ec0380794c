//! Deep embedded clustering: Student-t soft assignment of embeddings to
//! centroids, a sharpened target distribution, and a three-term loss
//! (KL to the target, inverse centroid spread, class cross-entropy).

mod kmeans;
mod persist;
mod train;

pub use kmeans::init_centroids;
pub use persist::DEC_MAGIC;
pub use train::{dec_loss_grad, train_dec, DecGradients, DecModel, LatentSet};

pub use crate::stopping::EarlyStop;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{check_len, invalid, Error, Result};

/// Degrees of freedom of the Student-t kernel.
pub const ALPHA: f64 = 1.0;

/// Offset inside the cross-entropy logarithm.
pub const CE_EPS: f64 = 1e-12;

const MIN_CENTROID_GAP: f64 = 1e-12;

/// Cluster centers, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    u: Array2<f64>,
}

impl Centroids {
    pub fn new(u: Array2<f64>) -> Result<Self> {
        if u.nrows() < 2 {
            return invalid(format!("need at least 2 centroids, got {}", u.nrows()));
        }
        Ok(Centroids { u })
    }

    pub fn count(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.u
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.u
    }

    /// Smallest pairwise Euclidean distance.
    pub fn min_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.count() {
            for j in i + 1..self.count() {
                best = best.min(dist(self.u.row(i), self.u.row(j)));
            }
        }
        best
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    sq_dist(a, b).sqrt()
}

fn kernel(d2: f64) -> f64 {
    if ALPHA == 1.0 {
        1.0 / (1.0 + d2)
    } else {
        (1.0 + d2 / ALPHA).powf(-(ALPHA + 1.0) / 2.0)
    }
}

/// q_j ∝ (1 + ‖z − u_j‖²/α)^(−(α+1)/2), normalized over centroids.
pub fn soft_assign(z: &[f64], c: &Centroids) -> Result<Vec<f64>> {
    check_len(c.dim(), z.len())?;
    let z = ndarray::ArrayView1::from(z);
    let mut q: Vec<f64> = c.u.rows().into_iter().map(|u| kernel(sq_dist(z, u))).collect();
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
    Ok(q)
}

pub fn soft_assign_batch(z: ArrayView2<f64>, c: &Centroids) -> Result<Array2<f64>> {
    check_len(c.dim(), z.ncols())?;
    let mut q = Array2::zeros((z.nrows(), c.count()));
    for (zi, mut qi) in z.rows().into_iter().zip(q.rows_mut()) {
        for (j, u) in c.u.rows().into_iter().enumerate() {
            qi[j] = kernel(sq_dist(zi, u));
        }
        let s = qi.sum();
        qi /= s;
    }
    Ok(q)
}

/// p_ij = (q_ij² / f_j) / Σ_j' (q_ij'² / f_j'), with f_j = Σ_i q_ij.
pub fn target_distribution(q: ArrayView2<f64>) -> Array2<f64> {
    let f = q.sum_axis(Axis(0));
    let mut p = q.to_owned();
    for mut row in p.rows_mut() {
        row.zip_mut_with(&f, |v, &fj| *v = *v * *v / fj);
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean over rows of Σ_j p_ij ln(p_ij / q_ij), with 0·ln(0/q) = 0.
pub fn kl_loss(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Result<f64> {
    check_shape(p, q)?;
    let mut total = 0.0;
    for (pv, qv) in p.iter().zip(q.iter()) {
        if *pv > 0.0 {
            if *qv <= 0.0 {
                return Err(Error::Numerical("KL term with q = 0 where p > 0".into()));
            }
            total += pv * (pv / qv).ln();
        }
    }
    Ok(total / p.nrows().max(1) as f64)
}

/// n_c(n_c − 1) divided by the sum of distances over ordered centroid pairs.
pub fn contrastive_loss(c: &Centroids) -> Result<f64> {
    let n = c.count();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = dist(c.u.row(i), c.u.row(j));
                if d < MIN_CENTROID_GAP {
                    return Err(Error::Numerical(format!("centroids {i} and {j} coincide")));
                }
                s += d;
            }
        }
    }
    Ok((n * (n - 1)) as f64 / s)
}

/// −(1/N) Σ_i Σ_c y_ic ln(ŷ_ic + ε).
pub fn ce_loss(y: ArrayView2<f64>, y_hat: ArrayView2<f64>) -> Result<f64> {
    check_shape(y, y_hat)?;
    let s: f64 = y.iter().zip(y_hat.iter()).map(|(t, p)| t * (p + CE_EPS).ln()).sum();
    Ok(-s / y.nrows().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecLoss {
    pub kl: f64,
    pub contrastive: f64,
    pub ce: f64,
}

impl DecLoss {
    pub fn total(&self) -> f64 {
        self.kl + self.contrastive + self.ce
    }
}

pub fn dec_loss_parts(
    p: ArrayView2<f64>,
    q: ArrayView2<f64>,
    c: &Centroids,
    y: ArrayView2<f64>,
    y_hat: ArrayView2<f64>,
) -> Result<DecLoss> {
    Ok(DecLoss {
        kl: kl_loss(p, q)?,
        contrastive: contrastive_loss(c)?,
        ce: ce_loss(y, y_hat)?,
    })
}

/// Unweighted sum of the KL, contrastive, and cross-entropy terms.
pub fn dec_total_loss(
    p: ArrayView2<f64>,
    q: ArrayView2<f64>,
    c: &Centroids,
    y: ArrayView2<f64>,
    y_hat: ArrayView2<f64>,
) -> Result<f64> {
    Ok(dec_loss_parts(p, q, c, y, y_hat)?.total())
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((labels.len(), n_classes));
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return invalid(format!("label {l} outside [0, {n_classes})"));
        }
        y[[i, l]] = 1.0;
    }
    Ok(y)
}

fn check_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    check_len(a.nrows(), b.nrows())?;
    check_len(a.ncols(), b.ncols())
}
