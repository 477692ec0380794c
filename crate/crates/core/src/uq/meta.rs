use std::io::Write;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{confidence_score, exact_shap};
use crate::codec::{Reader, Writer};
use crate::error::{check_len, invalid, Error, Result};
use crate::gbdt::{train, BoostParams, TreeEnsemble};
use crate::nn::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaVariant {
    Prob,
    Shap,
    Ig,
}

impl MetaVariant {
    pub const ALL: [MetaVariant; 3] = [MetaVariant::Prob, MetaVariant::Shap, MetaVariant::Ig];

    pub fn name(self) -> &'static str {
        match self {
            MetaVariant::Prob => "prob",
            MetaVariant::Shap => "shap",
            MetaVariant::Ig => "ig",
        }
    }

    pub fn width(self, d: usize, k: usize) -> usize {
        match self {
            MetaVariant::Prob => d + k + 1,
            MetaVariant::Shap => 2 * d,
            MetaVariant::Ig => 2 * d + k,
        }
    }

    pub fn columns(self, d: usize, k: usize) -> Vec<String> {
        let mut c: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        let sorted = (0..k).map(|i| format!("p_sorted_{i}"));
        match self {
            MetaVariant::Prob => {
                c.extend(sorted);
                c.push("z_conf".into());
            }
            MetaVariant::Shap => c.extend((0..d).map(|i| format!("phi_{i}"))),
            MetaVariant::Ig => {
                c.extend(sorted);
                c.extend((0..d).map(|i| format!("ig_{i}")));
            }
        }
        c
    }
}

fn sorted_desc(p: &[f64]) -> Vec<f64> {
    let mut v = p.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `[x, p sorted descending, top-two margin]`.
pub fn prob_augment(model: &TreeEnsemble, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = model.predict_proba_batch(x)?;
    let (d, k) = (x.ncols(), model.class_count);
    let mut out = Array2::zeros((x.nrows(), d + k + 1));
    for ((mut o, xi), pi) in out.rows_mut().into_iter().zip(x.rows()).zip(p.rows()) {
        let pi = pi.to_vec();
        o.slice_mut(s![..d]).assign(&xi);
        for (j, v) in sorted_desc(&pi).into_iter().enumerate() {
            o[d + j] = v;
        }
        o[d + k] = confidence_score(&pi)?.value;
    }
    Ok(out)
}

/// `[x, Shapley values of the predicted class]`.
pub fn shap_augment(model: &TreeEnsemble, x: ArrayView2<f64>, background: ArrayView2<f64>) -> Result<Array2<f64>> {
    let d = x.ncols();
    let mut out = Array2::zeros((x.nrows(), 2 * d));
    for (mut o, xi) in out.rows_mut().into_iter().zip(x.rows()) {
        let xi = xi.to_vec();
        let class = argmax(&model.predict_proba(&xi)?);
        let row = exact_shap(model, &xi, background, class)?;
        for j in 0..d {
            o[j] = xi[j];
            o[d + j] = row.phi[j];
        }
    }
    Ok(out)
}

/// `[x, p sorted descending, per-feature cumulative gain]`; the gain block
/// is the same for every row.
pub fn ig_augment(model: &TreeEnsemble, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = model.predict_proba_batch(x)?;
    let (d, k) = (x.ncols(), model.class_count);
    let gain = model.feature_gain();
    let mut out = Array2::zeros((x.nrows(), 2 * d + k));
    for ((mut o, xi), pi) in out.rows_mut().into_iter().zip(x.rows()).zip(p.rows()) {
        o.slice_mut(s![..d]).assign(&xi);
        for (j, v) in sorted_desc(&pi.to_vec()).into_iter().enumerate() {
            o[d + j] = v;
        }
        for (j, g) in gain.iter().enumerate() {
            o[d + k + j] = *g;
        }
    }
    Ok(out)
}

pub fn augment(
    variant: MetaVariant,
    model: &TreeEnsemble,
    x: ArrayView2<f64>,
    background: Option<ArrayView2<f64>>,
) -> Result<Array2<f64>> {
    match variant {
        MetaVariant::Prob => prob_augment(model, x),
        MetaVariant::Ig => ig_augment(model, x),
        MetaVariant::Shap => match background {
            Some(bg) => shap_augment(model, x, bg),
            None => invalid("SHAP augmentation needs a background set"),
        },
    }
}

/// 1 where the base model's prediction differs from the truth, else 0.
pub fn meta_labels(model: &TreeEnsemble, x: ArrayView2<f64>, y_true: &[usize]) -> Result<Vec<usize>> {
    check_len(x.nrows(), y_true.len())?;
    let pred = model.predict(x)?;
    Ok(pred.iter().zip(y_true).map(|(p, t)| usize::from(p != t)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub variant: MetaVariant,
    pub columns: Vec<String>,
    /// Row of the base input each meta row was built from.
    pub source_rows: Vec<usize>,
    pub background: Option<Array2<f64>>,
}

impl MetaDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> MetaDataset {
        MetaDataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            variant: self.variant,
            columns: self.columns.clone(),
            source_rows: rows.iter().map(|&r| self.source_rows[r]).collect(),
            background: self.background.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["source_row".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("y_meta".into());
        w.write_record(&header)?;
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let mut rec = vec![self.source_rows[i].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Labels every row by base-model correctness, keeps all errors, and draws
/// at most `ratio` times as many correct rows uniformly without
/// replacement. Rows stay in source order.
pub fn build_meta_dataset(
    model: &TreeEnsemble,
    x: ArrayView2<f64>,
    y_true: &[usize],
    variant: MetaVariant,
    ratio: f64,
    seed: u64,
    background: Option<ArrayView2<f64>>,
) -> Result<MetaDataset> {
    if !(ratio > 0.0) {
        return invalid(format!("subsampling ratio {ratio} must be positive"));
    }
    let labels = meta_labels(model, x, y_true)?;
    let wrong: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if wrong.is_empty() {
        return invalid("base model made no errors; nothing to train a metamodel on");
    }
    let right: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let keep = ((ratio * wrong.len() as f64).round() as usize).min(right.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = sample(&mut rng, right.len(), keep).into_iter().map(|i| right[i]).collect();
    rows.extend(&wrong);
    rows.sort_unstable();
    let base = x.select(Axis(0), &rows);
    let bg = background.map(|b| b.to_owned());
    let aug = augment(variant, model, base.view(), bg.as_ref().map(|b| b.view()))?;
    Ok(MetaDataset {
        x: aug,
        y: rows.iter().map(|&r| labels[r]).collect(),
        variant,
        columns: variant.columns(x.ncols(), model.class_count),
        source_rows: rows,
        background: bg,
    })
}

/// Binary classifier over augmented rows predicting base-model errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Metamodel {
    pub variant: MetaVariant,
    pub model: TreeEnsemble,
    pub background: Option<Array2<f64>>,
}

pub fn train_metamodel(md: &MetaDataset, params: &BoostParams) -> Result<Metamodel> {
    let model = train(md.x.view(), &md.y, 2, params)?;
    Ok(Metamodel {
        variant: md.variant,
        model,
        background: md.background.clone(),
    })
}

impl Metamodel {
    /// Probability that the base model is correct on each row of `x`.
    pub fn certainty(&self, base: &TreeEnsemble, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let aug = augment(self.variant, base, x, self.background.as_ref().map(|b| b.view()))?;
        self.certainty_augmented(aug.view())
    }

    pub fn certainty_augmented(&self, aug: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.model.predict_proba_batch(aug)?.column(0).to_vec())
    }
}

pub const META_MAGIC: &[u8; 7] = b"ODXUMM1";

impl Metamodel {
    /// `ODXUMM1`: variant code, embedded ensemble blob, then an optional
    /// background matrix (flag, rows, cols, row-major values).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(META_MAGIC);
        w.u8(MetaVariant::ALL.iter().position(|v| *v == self.variant).unwrap() as u8);
        w.blob(&self.model.to_bytes());
        match &self.background {
            Some(bg) => {
                w.u8(1);
                w.u32(bg.nrows() as u32);
                w.u32(bg.ncols() as u32);
                w.f64s(bg.as_standard_layout().as_slice().unwrap());
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::open(buf, META_MAGIC)?;
        let code = r.u8()? as usize;
        let variant = *MetaVariant::ALL
            .get(code)
            .ok_or_else(|| Error::Format(format!("unknown metamodel variant {code}")))?;
        let model = TreeEnsemble::from_bytes(r.blob()?)?;
        let background = match r.u8()? {
            0 => None,
            1 => {
                let rows = r.u32()? as usize;
                let cols = r.u32()? as usize;
                let vals = r.f64s(rows * cols)?;
                Some(Array2::from_shape_vec((rows, cols), vals).map_err(|e| Error::Format(e.to_string()))?)
            }
            f => return Err(Error::Format(format!("bad background flag {f}"))),
        };
        r.finish()?;
        Ok(Metamodel {
            variant,
            model,
            background,
        })
    }
}
