use ndarray::ArrayView2;

use crate::error::{check_len, invalid, Error, Result};
use crate::gbdt::{NodeKind, Tree, TreeEnsemble};
use crate::nn::softmax_in_place;

/// Subset enumeration is exponential in the feature count.
pub const MAX_SHAP_FEATURES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapRow {
    pub phi: Vec<f64>,
    /// Value of the empty coalition (every feature from the background).
    pub base_value: f64,
    /// Value of the full coalition, i.e. the explained probability.
    pub full_value: f64,
}

/// Weight of a coalition of size `s` out of `d` features.
pub fn shapley_weight(s: usize, d: usize) -> f64 {
    let fact = |n: usize| (1..=n).fold(1.0f64, |acc, k| acc * k as f64);
    fact(s) * fact(d - s - 1) / fact(d)
}

/// Interventional coalition values for every feature mask. Bit `i` set
/// means feature `i` is taken from `x`; the rest come from a background
/// row, and the class probability is averaged over the background.
pub fn coalition_values(model: &TreeEnsemble, x: &[f64], background: ArrayView2<f64>, class: usize) -> Result<Vec<f64>> {
    let d = model.n_features;
    check_len(d, x.len())?;
    check_len(d, background.ncols())?;
    if d > MAX_SHAP_FEATURES {
        return Err(Error::Capacity(format!(
            "{d} features exceeds exact enumeration limit of {MAX_SHAP_FEATURES}"
        )));
    }
    if background.nrows() == 0 {
        return invalid("empty background set");
    }
    if class >= model.class_count {
        return invalid(format!("class {class} outside model's {} classes", model.class_count));
    }
    let k = model.class_count;
    let n_masks = 1usize << d;
    let full = (n_masks - 1) as u32;
    let mut values = vec![0.0; n_masks];
    let mut margins = vec![0.0; n_masks * k];
    for r in background.rows() {
        let r = r.to_vec();
        margins.fill(model.base_score);
        // Every mask reaches exactly one leaf per tree, and trees are visited
        // in model order, so each mask's sum matches `predict_proba`.
        for t in &model.trees {
            fill(t, 0, 0, 0, full, x, &r, k, &mut margins);
        }
        for (m, v) in margins.chunks_exact_mut(k).zip(values.iter_mut()) {
            softmax_in_place(m);
            *v += m[class];
        }
    }
    let n = background.nrows() as f64;
    for v in &mut values {
        *v /= n;
    }
    Ok(values)
}

#[allow(clippy::too_many_arguments)]
fn fill(t: &Tree, node: usize, care: u32, want: u32, full: u32, x: &[f64], r: &[f64], k: usize, m: &mut [f64]) {
    match t.nodes[node].kind {
        NodeKind::Leaf { weight } => {
            let free = full & !care;
            let mut sub = free;
            loop {
                m[((want | sub) as usize) * k + t.class] += weight;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let bit = 1u32 << feature;
            let go = |goes_left: bool| if goes_left { left } else { right };
            let xl = x[feature] <= threshold;
            let rl = r[feature] <= threshold;
            if care & bit != 0 {
                let from_x = want & bit != 0;
                fill(t, go(if from_x { xl } else { rl }), care, want, full, x, r, k, m);
            } else if xl == rl {
                fill(t, go(xl), care, want, full, x, r, k, m);
            } else {
                fill(t, go(xl), care | bit, want | bit, full, x, r, k, m);
                fill(t, go(rl), care | bit, want, full, x, r, k, m);
            }
        }
    }
}

/// Exact Shapley values of `class`'s predicted probability.
pub fn exact_shap(model: &TreeEnsemble, x: &[f64], background: ArrayView2<f64>, class: usize) -> Result<ShapRow> {
    let values = coalition_values(model, x, background, class)?;
    let d = model.n_features;
    let weights: Vec<f64> = (0..d).map(|s| shapley_weight(s, d)).collect();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in 0..values.len() {
            if s & bit == 0 {
                *p += weights[s.count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
    }
    Ok(ShapRow {
        phi,
        base_value: values[0],
        full_value: values[values.len() - 1],
    })
}
