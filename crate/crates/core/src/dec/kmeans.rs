//! k-means++ seeding followed by Lloyd iterations.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, Centroids, MIN_CENTROID_GAP};
use crate::error::{invalid, Error, Result};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-6;

/// Deterministic given `seed`. Coincident centroids trigger one re-seed,
/// then an error.
pub fn init_centroids(latents: ArrayView2<f64>, k: usize, seed: u64) -> Result<Centroids> {
    if k < 2 {
        return invalid(format!("need k >= 2 centroids, got {k}"));
    }
    if k > latents.nrows() {
        return invalid(format!("k = {k} exceeds {} points", latents.nrows()));
    }
    for attempt in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let u = lloyd(latents, plus_plus(latents, k, &mut rng));
        let c = Centroids::new(u)?;
        if c.min_gap() >= MIN_CENTROID_GAP {
            return Ok(c);
        }
    }
    Err(Error::Numerical("k-means produced coincident centroids twice".into()))
}

fn plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            // guard against rounding landing on a zero-weight tail
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap();
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select(ndarray::Axis(0), &chosen)
}

fn nearest(row: ndarray::ArrayView1<f64>, u: &Array2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in u.rows().into_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn lloyd(x: ArrayView2<f64>, mut u: Array2<f64>) -> Array2<f64> {
    let k = u.nrows();
    for _ in 0..MAX_ITER {
        let mut sums = Array2::<f64>::zeros(u.raw_dim());
        let mut counts = vec![0usize; k];
        for row in x.rows() {
            let j = nearest(row, &u);
            counts[j] += 1;
            let mut s = sums.row_mut(j);
            s += &row;
        }
        let mut shift = 0.0f64;
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let mut s = sums.row_mut(j);
            s /= n as f64;
            shift = shift.max(sq_dist(s.view(), u.row(j)).sqrt());
            u.row_mut(j).assign(&s);
        }
        if shift < TOL {
            break;
        }
    }
    u
}

/// Hard assignment of each row to its nearest centroid.
pub(crate) fn assign(x: ArrayView2<f64>, c: &Centroids) -> Vec<usize> {
    x.rows().into_iter().map(|r| nearest(r, c.matrix())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn point_masses_give_their_centers() {
        let mut rows = Vec::new();
        for _ in 0..10 {
            rows.extend_from_slice(&[1.0, 1.0, 1.0]);
        }
        for _ in 0..7 {
            rows.extend_from_slice(&[-4.0, 2.0, 0.5]);
        }
        let x = Array2::from_shape_vec((17, 3), rows).unwrap();
        let c = init_centroids(x.view(), 2, 3).unwrap();
        let mut centers: Vec<Vec<f64>> = c.matrix().rows().into_iter().map(|r| r.to_vec()).collect();
        centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        for (got, want) in centers.iter().zip([[-4.0, 2.0, 0.5], [1.0, 1.0, 1.0]]) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn k_equals_n_keeps_every_point() {
        let x = arr2(&[[0.0, 0.0], [1.0, 5.0], [3.0, -2.0], [7.0, 7.0]]);
        let c = init_centroids(x.view(), 4, 9).unwrap();
        let mut got: Vec<Vec<f64>> = c.matrix().rows().into_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn seeded_and_bounded() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        assert_eq!(init_centroids(x.view(), 3, 5).unwrap(), init_centroids(x.view(), 3, 5).unwrap());
        assert!(init_centroids(x.view(), 51, 5).is_err());
        let same = Array2::from_elem((5, 2), 1.0);
        assert!(init_centroids(same.view(), 2, 0).is_err());
    }
}
