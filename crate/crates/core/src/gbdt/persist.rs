//! `ODXUGB1` container: params block, class count, feature count, base
//! score, then each tree's class and preorder node records.

use super::tree::{Node, NodeKind, Tree};
use super::{BoostParams, TreeEnsemble};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const GBDT_MAGIC: &[u8; 7] = b"ODXUGB1";

const TAG_LEAF: u8 = 0;
const TAG_SPLIT: u8 = 1;

impl TreeEnsemble {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(GBDT_MAGIC);
        let p = &self.params;
        w.f64(p.lambda);
        w.f64(p.gamma);
        w.f64(p.learning_rate);
        w.u32(p.max_depth as u32);
        w.u32(p.rounds as u32);
        w.f64(p.min_child_hessian);
        w.u64(p.seed);
        w.u32(self.class_count as u32);
        w.u32(self.n_features as u32);
        w.f64(self.base_score);
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            w.u32(t.class as u32);
            w.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                match n.kind {
                    NodeKind::Leaf { weight } => {
                        w.u8(TAG_LEAF);
                        w.f64(n.grad_sum);
                        w.f64(n.hess_sum);
                        w.f64(weight);
                    }
                    NodeKind::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                    } => {
                        w.u8(TAG_SPLIT);
                        w.f64(n.grad_sum);
                        w.f64(n.hess_sum);
                        w.u32(feature as u32);
                        w.f64(threshold);
                        w.f64(gain);
                        w.u32(left as u32);
                        w.u32(right as u32);
                    }
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::open(buf, GBDT_MAGIC)?;
        let params = BoostParams {
            lambda: r.f64()?,
            gamma: r.f64()?,
            learning_rate: r.f64()?,
            max_depth: r.u32()? as usize,
            rounds: r.u32()? as usize,
            min_child_hessian: r.f64()?,
            seed: r.u64()?,
        };
        let class_count = r.u32()? as usize;
        let n_features = r.u32()? as usize;
        let base_score = r.f64()?;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let class = r.u32()? as usize;
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
            for _ in 0..n_nodes {
                let tag = r.u8()?;
                let grad_sum = r.f64()?;
                let hess_sum = r.f64()?;
                let kind = match tag {
                    TAG_LEAF => NodeKind::Leaf { weight: r.f64()? },
                    TAG_SPLIT => NodeKind::Split {
                        feature: r.u32()? as usize,
                        threshold: r.f64()?,
                        gain: r.f64()?,
                        left: r.u32()? as usize,
                        right: r.u32()? as usize,
                    },
                    other => return Err(Error::Format(format!("unknown node tag {other}"))),
                };
                nodes.push(Node { grad_sum, hess_sum, kind });
            }
            validate_tree(&nodes, class, class_count, n_features)?;
            trees.push(Tree { class, nodes });
        }
        r.finish()?;
        Ok(TreeEnsemble {
            trees,
            class_count,
            n_features,
            base_score,
            params,
        })
    }
}

fn validate_tree(nodes: &[Node], class: usize, class_count: usize, n_features: usize) -> Result<()> {
    if nodes.is_empty() || class >= class_count {
        return Err(Error::Format("empty tree or class out of range".into()));
    }
    for (i, n) in nodes.iter().enumerate() {
        if let NodeKind::Split { feature, left, right, .. } = n.kind {
            // preorder: children come after their parent
            if feature >= n_features || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                return Err(Error::Format(format!("node {i} has invalid feature or child index")));
            }
        }
    }
    Ok(())
}
