//! Uncertainty quantification over a trained boosted-tree classifier:
//! two score-based methods read off the predicted probabilities, and
//! metamodels trained to predict the base classifier's errors from
//! augmented inputs.

mod meta;
mod shap;

pub use meta::{
    augment, build_meta_dataset, ig_augment, meta_labels, prob_augment, shap_augment, train_metamodel, MetaDataset,
    MetaVariant, Metamodel, META_MAGIC,
};
pub use shap::{coalition_values, exact_shap, shapley_weight, ShapRow, MAX_SHAP_FEATURES};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gbdt::TreeEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsCertain,
    HigherIsUncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub value: f64,
    pub polarity: Polarity,
}

impl UncertaintyScore {
    /// Oriented so that larger means less certain.
    pub fn uncertainty(&self) -> f64 {
        match self.polarity {
            Polarity::HigherIsCertain => 1.0 - self.value,
            Polarity::HigherIsUncertain => self.value,
        }
    }
}

/// Largest minus second-largest probability.
pub fn confidence_score(p: &[f64]) -> Result<UncertaintyScore> {
    if p.len() < 2 {
        return invalid("confidence needs at least two classes");
    }
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    Ok(UncertaintyScore {
        value: a - b,
        polarity: Polarity::HigherIsCertain,
    })
}

/// Natural-log entropy with 0 log 0 = 0.
pub fn entropy_score(p: &[f64]) -> UncertaintyScore {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    UncertaintyScore {
        value: h.max(0.0),
        polarity: Polarity::HigherIsUncertain,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UqMethod {
    Confidence,
    Entropy,
    MetaProb,
    MetaShap,
    MetaIg,
}

impl UqMethod {
    pub const ALL: [UqMethod; 5] = [
        UqMethod::Confidence,
        UqMethod::Entropy,
        UqMethod::MetaProb,
        UqMethod::MetaShap,
        UqMethod::MetaIg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UqMethod::Confidence => "confidence",
            UqMethod::Entropy => "entropy",
            UqMethod::MetaProb => "meta_prob",
            UqMethod::MetaShap => "meta_shap",
            UqMethod::MetaIg => "meta_ig",
        }
    }

    pub fn variant(self) -> Option<MetaVariant> {
        match self {
            UqMethod::MetaProb => Some(MetaVariant::Prob),
            UqMethod::MetaShap => Some(MetaVariant::Shap),
            UqMethod::MetaIg => Some(MetaVariant::Ig),
            _ => None,
        }
    }
}

impl fmt::Display for UqMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UqMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UqMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown UQ method {s:?}")))
    }
}

/// Raw per-row scores for `method`. Metamodel methods need the matching
/// metamodel.
pub fn raw_scores(
    method: UqMethod,
    base: &TreeEnsemble,
    x: ArrayView2<f64>,
    meta: Option<&Metamodel>,
) -> Result<Vec<UncertaintyScore>> {
    match method.variant() {
        None => {
            let p = base.predict_proba_batch(x)?;
            p.rows()
                .into_iter()
                .map(|r| {
                    let r = r.to_vec();
                    if method == UqMethod::Confidence {
                        confidence_score(&r)
                    } else {
                        Ok(entropy_score(&r))
                    }
                })
                .collect()
        }
        Some(v) => {
            let Some(mm) = meta.filter(|m| m.variant == v) else {
                return invalid(format!("{method} needs a {} metamodel", v.name()));
            };
            Ok(mm
                .certainty(base, x)?
                .into_iter()
                .map(|value| UncertaintyScore {
                    value,
                    polarity: Polarity::HigherIsCertain,
                })
                .collect())
        }
    }
}

/// Per-row uncertainty, larger meaning less certain: entropy as is, one
/// minus confidence, one minus metamodel certainty.
pub fn score_with(method: UqMethod, base: &TreeEnsemble, x: ArrayView2<f64>, meta: Option<&Metamodel>) -> Result<Vec<f64>> {
    Ok(raw_scores(method, base, x, meta)?.iter().map(|s| s.uncertainty()).collect())
}

/// One column per method, one row per sample, with an optional label column.
pub fn write_scores_csv<W: Write>(methods: &[(UqMethod, Vec<f64>)], labels: Option<&[usize]>, out: W) -> Result<()> {
    let n = methods.first().map_or(0, |m| m.1.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = methods.iter().map(|m| m.0.name().to_string()).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec: Vec<String> = methods.iter().map(|m| m.1[i].to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{BoostParams, Tree};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn confidence_examples() {
        assert!((confidence_score(&[0.7, 0.2, 0.1]).unwrap().value - 0.5).abs() < 1e-15);
        assert_eq!(confidence_score(&[0.0, 1.0, 0.0]).unwrap().value, 1.0);
        assert_eq!(confidence_score(&[0.25; 4]).unwrap().value, 0.0);
        assert!(confidence_score(&[1.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_score(&[0.0, 1.0, 0.0]).value, 0.0);
        assert!((entropy_score(&[0.25; 4]).value - 4f64.ln()).abs() < 1e-15);
        let oracle = -(0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
        assert!((entropy_score(&[0.5, 0.3, 0.2]).value - oracle).abs() < 1e-15);
        assert!((oracle - 1.0297).abs() < 1e-4);
    }

    #[test]
    fn method_names_round_trip() {
        for m in UqMethod::ALL {
            assert_eq!(m.name().parse::<UqMethod>().unwrap(), m);
        }
        assert!("kernel_shap".parse::<UqMethod>().is_err());
    }

    #[test]
    fn score_polarity() {
        let sharp = TreeEnsemble {
            trees: vec![Tree::leaf(0, 50.0)],
            class_count: 3,
            n_features: 1,
            base_score: 0.0,
            params: BoostParams::default(),
        };
        let flat = TreeEnsemble {
            trees: vec![],
            ..sharp.clone()
        };
        let x = array![[0.0]];
        for m in [UqMethod::Confidence, UqMethod::Entropy] {
            assert!(score_with(m, &sharp, x.view(), None).unwrap()[0] < 1e-12);
        }
        assert_eq!(score_with(UqMethod::Confidence, &flat, x.view(), None).unwrap()[0], 1.0);
        assert!((score_with(UqMethod::Entropy, &flat, x.view(), None).unwrap()[0] - 3f64.ln()).abs() < 1e-12);
        assert!(score_with(UqMethod::MetaIg, &flat, x.view(), None).is_err());
    }

    proptest! {
        #[test]
        fn bounds_and_binary_agreement(raw in proptest::collection::vec(0.001f64..1.0, 2..6)) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let c = confidence_score(&p).unwrap().value;
            let h = entropy_score(&p).value;
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn two_class_orderings_agree(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (pa, pb) = ([a, 1.0 - a], [b, 1.0 - b]);
            let ca = 1.0 - confidence_score(&pa).unwrap().value;
            let cb = 1.0 - confidence_score(&pb).unwrap().value;
            let (ha, hb) = (entropy_score(&pa).value, entropy_score(&pb).value);
            if (ca - cb).abs() > 1e-9 {
                prop_assert_eq!(ca < cb, ha < hb);
            }
        }
    }
}
