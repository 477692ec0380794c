//! Classification and uncertainty metrics.
//!
//! The binary view collapses every attack class into "positive" and the
//! benign class into "negative". Uncertainty scores follow the convention
//! that larger means less certain; the positive label is the event being
//! detected (a misclassification or an unknown-class sample).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub benign: usize,
    pub certainty: Option<Vec<f64>>,
}

impl EvalFrame {
    pub fn new(y_true: Vec<usize>, y_pred: Vec<usize>, benign: usize) -> Result<Self> {
        check_len(y_true.len(), y_pred.len())?;
        if y_true.is_empty() {
            return invalid("empty evaluation frame");
        }
        Ok(EvalFrame {
            y_true,
            y_pred,
            benign,
            certainty: None,
        })
    }

    pub fn with_certainty(mut self, z: Vec<f64>) -> Result<Self> {
        check_len(self.y_true.len(), z.len())?;
        self.certainty = Some(z);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_true.is_empty()
    }

    /// (true is attack, predicted is attack) per sample.
    pub fn binary(&self) -> impl Iterator<Item = (bool, bool)> + '_ {
        self.y_true
            .iter()
            .zip(&self.y_pred)
            .map(|(&t, &p)| (t != self.benign, p != self.benign))
    }
}

pub fn multiclass_accuracy(f: &EvalFrame) -> f64 {
    let hits = f.y_true.iter().zip(&f.y_pred).filter(|(t, p)| t == p).count();
    hits as f64 / f.len() as f64
}

pub fn binary_accuracy(f: &EvalFrame) -> f64 {
    let hits = f.binary().filter(|(t, p)| t == p).count();
    hits as f64 / f.len() as f64
}

/// Attacks that were flagged but given the wrong attack type, over all attacks.
pub fn misclassified_positive_rate(f: &EvalFrame) -> Result<f64> {
    let attacks = f.binary().filter(|b| b.0).count();
    if attacks == 0 {
        return invalid("misclassified positive rate is undefined without attacks");
    }
    let wrong_type = f
        .y_true
        .iter()
        .zip(&f.y_pred)
        .filter(|(&t, &p)| t != f.benign && p != f.benign && t != p)
        .count();
    Ok(wrong_type as f64 / attacks as f64)
}

/// Missed attacks over everything predicted benign.
pub fn false_omission_rate(f: &EvalFrame) -> Result<f64> {
    let predicted_benign = f.binary().filter(|b| !b.1).count();
    if predicted_benign == 0 {
        return invalid("false omission rate is undefined without benign predictions");
    }
    let missed = f.binary().filter(|&(t, p)| t && !p).count();
    Ok(missed as f64 / predicted_benign as f64)
}

pub fn f1_binary(f: &EvalFrame) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (t, p) in f.binary() {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Certainty mass of true positives minus that of false positives, over
/// the number of predicted positives.
pub fn competence(f: &EvalFrame) -> Result<f64> {
    let z = f
        .certainty
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("competence needs certainty scores".into()))?;
    let (mut net, mut n) = (0.0, 0usize);
    for ((t, p), &zi) in f.binary().zip(z) {
        if p {
            n += 1;
            net += if t { zi } else { -zi };
        }
    }
    if n == 0 {
        return invalid("competence is undefined without predicted positives");
    }
    Ok(net / n as f64)
}

/// Number of samples whose predicted attack/benign status is wrong plus
/// the number flagged as the wrong attack type. Equals the multiclass
/// error count.
pub fn error_decomposition(f: &EvalFrame) -> (usize, usize, usize) {
    let multiclass = f.y_true.iter().zip(&f.y_pred).filter(|(t, p)| t != p).count();
    let binary = f.binary().filter(|(t, p)| t != p).count();
    let wrong_type = f
        .y_true
        .iter()
        .zip(&f.y_pred)
        .filter(|(&t, &p)| t != f.benign && p != f.benign && t != p)
        .count();
    (multiclass, binary, wrong_type)
}

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    check_len(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return invalid("NaN score");
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return invalid("AUROC needs both positive and negative labels");
    }
    Ok((pos, neg))
}

/// Mann-Whitney form with mid-ranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Below this many negatives the 95% quantile is poorly resolved.
pub const MIN_NEGATIVES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpAtTn {
    pub tpr: f64,
    pub threshold: f64,
    pub low_negative_count: bool,
}

/// τ is the smallest observed score with at least `tn_target` of the
/// negatives strictly below it (infinity if none); positives at or above τ
/// count as detected.
pub fn tp_at_tn(scores: &[f64], labels: &[bool], tn_target: f64) -> Result<TpAtTn> {
    let (pos, neg) = check_binary(scores, labels)?;
    if !(0.0..=1.0).contains(&tn_target) {
        return invalid(format!("TN target {tn_target} outside [0, 1]"));
    }
    let mut negs: Vec<f64> = scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0).collect();
    negs.sort_by(f64::total_cmp);
    let mut cands = scores.to_vec();
    cands.sort_by(f64::total_cmp);
    let needed = tn_target * neg as f64;
    let mut threshold = f64::INFINITY;
    for &t in &cands {
        let below = negs.partition_point(|&v| v < t);
        if below as f64 >= needed - 1e-9 {
            threshold = t;
            break;
        }
    }
    let hit = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| l && s >= threshold)
        .count();
    Ok(TpAtTn {
        tpr: hit as f64 / pos as f64,
        threshold,
        low_negative_count: neg < MIN_NEGATIVES,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One point per distinct score (descending), predicting positive when
/// score >= threshold, preceded by the (inf, 0, 0) corner.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &k) in order.iter().enumerate() {
        if labels[k] {
            tp += 1;
        } else {
            fp += 1;
        }
        if i + 1 == order.len() || scores[order[i + 1]] != scores[k] {
            out.push(RocPoint {
                threshold: scores[k],
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
            });
        }
    }
    Ok(out)
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Metric name to value. Undefined metrics are left out.
pub type MetricsReport = BTreeMap<String, f64>;

pub fn classification_report(f: &EvalFrame) -> MetricsReport {
    let mut r = MetricsReport::new();
    r.insert("multiclass_accuracy".into(), multiclass_accuracy(f));
    r.insert("binary_accuracy".into(), binary_accuracy(f));
    r.insert("f1".into(), f1_binary(f));
    if let Ok(v) = misclassified_positive_rate(f) {
        r.insert("mpr".into(), v);
    }
    if let Ok(v) = false_omission_rate(f) {
        r.insert("for".into(), v);
    }
    if let Ok(v) = competence(f) {
        r.insert("competence".into(), v);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(t: &[usize], p: &[usize]) -> EvalFrame {
        EvalFrame::new(t.to_vec(), p.to_vec(), 0).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(multiclass_accuracy(&frame(&[1, 2], &[1, 2])), 1.0);
        assert_eq!(multiclass_accuracy(&frame(&[1, 2], &[2, 1])), 0.0);
        assert_eq!(multiclass_accuracy(&frame(&[0, 1, 2, 1], &[0, 1, 2, 2])), 0.75);
    }

    #[test]
    fn binary_collapse_examples() {
        assert_eq!(binary_accuracy(&frame(&[1], &[2])), 1.0);
        assert_eq!(binary_accuracy(&frame(&[0, 0], &[0, 0])), 1.0);
        // one attack called a different attack: binary-correct
        let f = frame(&[0, 1, 2, 1, 0], &[0, 2, 2, 1, 0]);
        assert_eq!(binary_accuracy(&f), 1.0);
        assert_eq!(multiclass_accuracy(&f), 0.8);
        // one attack called benign: binary error
        let f = frame(&[0, 1, 2, 1, 0], &[0, 0, 2, 1, 0]);
        assert_eq!(binary_accuracy(&f), 0.8);
    }

    #[test]
    fn mpr_examples() {
        assert_eq!(misclassified_positive_rate(&frame(&[1, 2, 0], &[1, 2, 1])).unwrap(), 0.0);
        let t = [1, 1, 1, 1, 1, 2, 2, 2, 2, 2];
        let p = [2, 1, 1, 1, 1, 1, 2, 2, 2, 2];
        assert_eq!(misclassified_positive_rate(&frame(&t, &p)).unwrap(), 0.2);
        let f = frame(&[1, 0], &[0, 0]);
        assert_eq!(misclassified_positive_rate(&f).unwrap(), 0.0);
        assert_eq!(false_omission_rate(&f).unwrap(), 0.5);
        assert!(misclassified_positive_rate(&frame(&[0], &[1])).is_err());
    }

    #[test]
    fn for_examples() {
        assert_eq!(false_omission_rate(&frame(&[0, 1], &[0, 1])).unwrap(), 0.0);
        assert_eq!(false_omission_rate(&frame(&[0, 0, 0, 1, 1], &[0, 0, 0, 0, 2])).unwrap(), 0.25);
        assert_eq!(false_omission_rate(&frame(&[0, 1, 0, 2], &[0, 0, 0, 0])).unwrap(), 0.5);
        assert!(false_omission_rate(&frame(&[0], &[1])).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_binary(&frame(&[0, 1], &[0, 1])), 1.0);
        let v = f1_binary(&frame(&[1, 0], &[1, 1]));
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_binary(&frame(&[0, 0], &[0, 0])), 0.0);
    }

    #[test]
    fn competence_examples() {
        let f = frame(&[1, 2, 0, 0], &[1, 2, 1, 0]).with_certainty(vec![0.9, 0.8, 0.6, 0.1]).unwrap();
        assert!((competence(&f).unwrap() - 1.1 / 3.0).abs() < 1e-12);
        let f = frame(&[1, 2], &[1, 1]).with_certainty(vec![1.0, 1.0]).unwrap();
        assert_eq!(competence(&f).unwrap(), 1.0);
        let f = frame(&[1, 0], &[1, 1]).with_certainty(vec![0.4, 0.4]).unwrap();
        assert_eq!(competence(&f).unwrap(), 0.0);
        assert!(competence(&frame(&[1], &[1])).is_err());
        let f = frame(&[1], &[0]).with_certainty(vec![0.5]).unwrap();
        assert!(competence(&f).is_err());
    }

    #[test]
    fn auroc_examples() {
        let l = [true, true, false, false];
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &l).unwrap(), 1.0);
        assert_eq!(auroc(&[0.6, 0.3, 0.5, 0.2], &l).unwrap(), 0.75);
        assert_eq!(auroc(&[0.4; 4], &l).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn tp_at_tn_examples() {
        let l = [true, true, false, false];
        assert_eq!(tp_at_tn(&[0.9, 0.8, 0.3, 0.2], &l, 0.95).unwrap().tpr, 1.0);

        let mut s: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let mut lab = vec![false; 100];
        s.extend([0.99; 10]);
        lab.extend([true; 10]);
        let r = tp_at_tn(&s, &lab, 0.95).unwrap();
        assert_eq!(r.tpr, 1.0);
        assert!(!r.low_negative_count);

        let base: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let s: Vec<f64> = base.iter().chain(&base).copied().collect();
        let lab: Vec<bool> = (0..200).map(|i| i >= 100).collect();
        assert!((tp_at_tn(&s, &lab, 0.95).unwrap().tpr - 0.05).abs() < 1e-12);

        assert!(tp_at_tn(&[0.1, 0.2], &[true, false], 0.95).unwrap().low_negative_count);
    }

    #[test]
    fn roc_curve_corners() {
        let pts = roc_curve(&[0.9, 0.8, 0.8, 0.2], &[true, false, true, false]).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[3].fpr, pts[3].tpr), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        let mut buf = Vec::new();
        write_roc_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("threshold,fpr,tpr\n"));
    }

    proptest! {
        #[test]
        fn collapse_never_lowers_accuracy(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let f = EvalFrame::new(t, p, 0).unwrap();
            prop_assert!(binary_accuracy(&f) >= multiclass_accuracy(&f));
            let (m, b, w) = error_decomposition(&f);
            prop_assert_eq!(m, b + w);
        }

        #[test]
        fn flipped_labels_complement(scores in proptest::collection::hash_set(0u32..10_000, 2..80), seed in any::<u64>()) {
            let s: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let l: Vec<bool> = (0..s.len()).map(|i| (seed >> (i % 64)) & 1 == 1 || i == 0).collect();
            prop_assume!(l.iter().any(|&b| !b));
            let flipped: Vec<bool> = l.iter().map(|b| !b).collect();
            let a = auroc(&s, &l).unwrap() + auroc(&s, &flipped).unwrap();
            prop_assert!((a - 1.0).abs() < 1e-12);
        }

        #[test]
        fn competence_is_bounded(rows in proptest::collection::vec((0usize..3, 0usize..3, 0.0f64..=1.0), 1..50)) {
            let t = rows.iter().map(|r| r.0).collect();
            let p = rows.iter().map(|r| r.1).collect();
            let z = rows.iter().map(|r| r.2).collect();
            let f = EvalFrame::new(t, p, 0).unwrap().with_certainty(z).unwrap();
            if let Ok(c) = competence(&f) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
