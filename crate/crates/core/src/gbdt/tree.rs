use ndarray::ArrayView2;

use super::{leaf_weight, split_gain, BoostParams};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub grad_sum: f64,
    pub hess_sum: f64,
    pub kind: NodeKind,
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub class: usize,
    pub nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Tree {
    /// Single-leaf tree; node sums are left at zero.
    pub fn leaf(class: usize, weight: f64) -> Tree {
        Tree {
            class,
            nodes: vec![Node {
                grad_sum: 0.0,
                hess_sum: 0.0,
                kind: NodeKind::Leaf { weight },
            }],
        }
    }

    /// Depth-one tree; node sums are left at zero.
    pub fn stump(class: usize, feature: usize, threshold: f64, left: f64, right: f64, gain: f64) -> Tree {
        let leaf = |weight| Node {
            grad_sum: 0.0,
            hess_sum: 0.0,
            kind: NodeKind::Leaf { weight },
        };
        Tree {
            class,
            nodes: vec![
                Node {
                    grad_sum: 0.0,
                    hess_sum: 0.0,
                    kind: NodeKind::Split {
                        feature,
                        threshold,
                        left: 1,
                        right: 2,
                        gain,
                    },
                },
                leaf(left),
                leaf(right),
            ],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i].kind {
                NodeKind::Leaf { weight } => return *weight,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Leaf { .. })).count()
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, gain, .. } => Some((feature, gain)),
            NodeKind::Leaf { .. } => None,
        })
    }

    pub(crate) fn fit(x: ArrayView2<f64>, g: &[f64], h: &[f64], params: &BoostParams, class: usize) -> Tree {
        let mut tree = Tree { class, nodes: Vec::new() };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        tree.grow(x, g, h, params, rows, 0);
        tree
    }

    fn grow(&mut self, x: ArrayView2<f64>, g: &[f64], h: &[f64], params: &BoostParams, rows: Vec<usize>, depth: usize) -> usize {
        let gs: f64 = rows.iter().map(|&i| g[i]).sum();
        let hs: f64 = rows.iter().map(|&i| h[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node {
            grad_sum: gs,
            hess_sum: hs,
            kind: NodeKind::Leaf {
                weight: leaf_weight(gs, hs, params),
            },
        });
        if depth >= params.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = best_split(x, g, h, params, &rows, gs, hs) else {
            return id;
        };
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[[i, best.feature]] <= best.threshold);
        let left = self.grow(x, g, h, params, l_rows, depth + 1);
        let right = self.grow(x, g, h, params, r_rows, depth + 1);
        // stored gain comes from the children's own sums so it audits exactly
        let (l, r) = (&self.nodes[left], &self.nodes[right]);
        let gain = split_gain(l.grad_sum, l.hess_sum, r.grad_sum, r.hess_sum, params);
        debug_assert!(best.gain.is_finite());
        self.nodes[id].kind = NodeKind::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain,
        };
        id
    }
}

/// Highest positive gain over every feature and midpoint; ties keep the
/// lowest feature, then the lowest threshold.
fn best_split(
    x: ArrayView2<f64>,
    g: &[f64],
    h: &[f64],
    params: &BoostParams,
    rows: &[usize],
    gs: f64,
    hs: f64,
) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    let mut sorted = rows.to_vec();
    for f in 0..x.ncols() {
        sorted.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..sorted.len() - 1 {
            let i = sorted[k];
            gl += g[i];
            hl += h[i];
            let (lo, hi) = (x[[i, f]], x[[sorted[k + 1], f]]);
            if lo == hi {
                continue;
            }
            let (gr, hr) = (gs - gl, hs - hl);
            if hl < params.min_child_hessian || hr < params.min_child_hessian {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, params);
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

/// A threshold t with lo <= t < hi.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || !m.is_finite() {
        lo
    } else {
        m
    }
}

/// Fits one tree to the given gradients with `params.max_depth`.
pub fn build_tree(x: ArrayView2<f64>, g: &[f64], h: &[f64], params: &BoostParams) -> Tree {
    Tree::fit(x, g, h, params, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;

    fn params(lambda: f64, mch: f64) -> BoostParams {
        BoostParams {
            lambda,
            gamma: 0.0,
            learning_rate: 1.0,
            min_child_hessian: mch,
            ..BoostParams::default()
        }
    }

    #[test]
    fn constant_features_give_single_leaf() {
        let x = Array2::from_elem((5, 3), 2.0);
        let p = BoostParams::default();
        let t = build_tree(x.view(), &[0.5; 5], &[0.2; 5], &p);
        assert_eq!(t.nodes.len(), 1);
        let expected = -(2.5) / (1.0 + 1.0) * 0.3;
        assert_eq!(t.nodes[0].kind, NodeKind::Leaf { weight: expected });
    }

    #[test]
    fn hand_split_on_two_points() {
        let x = arr2(&[[0.0], [1.0]]);
        let t = build_tree(x.view(), &[-1.0, 1.0], &[1.0, 1.0], &params(0.0, 0.0));
        match t.nodes[0].kind {
            NodeKind::Split { feature, threshold, gain, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
                assert!((gain - 1.0).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&[0.0]), 1.0);
        assert_eq!(t.predict(&[1.0]), -1.0);
    }

    #[test]
    fn zero_depth_is_a_leaf() {
        let x = arr2(&[[0.0], [1.0]]);
        let p = BoostParams {
            max_depth: 0,
            ..params(0.0, 0.0)
        };
        assert_eq!(build_tree(x.view(), &[-1.0, 1.0], &[1.0, 1.0], &p).nodes.len(), 1);
    }

    #[test]
    fn adjacent_floats_split_cleanly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(midpoint(a, b) >= a && midpoint(a, b) < b);
    }

    /// Brute-force scan of every (feature, observed value) threshold.
    fn brute_root(x: &Array2<f64>, g: &[f64], h: &[f64], p: &BoostParams) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = x.column(f).to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..x.nrows() {
                    if x[[i, f]] <= t {
                        gl += g[i];
                        hl += h[i];
                    } else {
                        gr += g[i];
                        hr += h[i];
                    }
                }
                if hl < p.min_child_hessian || hr < p.min_child_hessian {
                    continue;
                }
                let v = split_gain(gl, hl, gr, hr, p);
                if v > 1e-9 && best.is_none_or(|b| v > b.2 + 1e-9) {
                    best = Some((f, t, v));
                }
            }
        }
        best.map(|b| (b.0, b.1))
    }

    proptest! {
        #[test]
        fn root_split_matches_brute_force(
            n in 2usize..30, d in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // coarse grid values give plenty of ties
            let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(0..6) as f64);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.25)).collect();
            let p = params(1.0, 0.1);
            let t = build_tree(x.view(), &g, &h, &p);
            let got = match t.nodes[0].kind {
                NodeKind::Split { feature, threshold, .. } => Some((feature, threshold)),
                NodeKind::Leaf { .. } => None,
            };
            let want = brute_root(&x, &g, &h, &p);
            // near-ties within 1e-9 are not distinguishable by the oracle
            if let (Some(a), Some(b)) = (got, want) {
                let gain_of = |(f, thr): (usize, f64)| {
                    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..n { if x[[i, f]] <= thr { gl += g[i]; hl += h[i]; } else { gr += g[i]; hr += h[i]; } }
                    split_gain(gl, hl, gr, hr, &p)
                };
                prop_assert!(a == b || (gain_of(a) - gain_of(b)).abs() < 1e-9);
            } else {
                prop_assert_eq!(got.is_some(), want.is_some());
            }
        }
    }
}
