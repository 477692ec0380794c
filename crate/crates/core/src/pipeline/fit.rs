use ndarray::{Array2, ArrayView2, Axis};

use super::manifest::{leakage_overlap, sha256_hex, RunManifest};
use super::split::stratified_split;
use super::PipelineConfig;
use crate::dec::{train_dec, DecModel};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{train, TreeEnsemble};
use crate::metrics::{classification_report, EvalFrame, MetricsReport};
use crate::nn::{train_autoencoder, train_fcnn, Autoencoder, EpochLossTrace, FcnnClassifier};
use crate::payload::PayloadDataset;
use crate::uq::confidence_score;

/// Feature matrix with contiguous class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    pub row_hashes: Vec<String>,
}

impl Prepared {
    /// Classes present in `data` (in label-table order) minus `exclude`.
    /// Rows of excluded classes are dropped.
    pub fn from_dataset(data: &PayloadDataset, exclude: &[&str]) -> Result<Self> {
        let present = data.class_counts();
        let classes: Vec<String> = data
            .labels
            .names()
            .iter()
            .enumerate()
            .filter(|(i, n)| present.contains_key(&crate::payload::LabelId(*i as u16)) && !exclude.contains(&n.as_str()))
            .map(|(_, n)| n.clone())
            .collect();
        Self::with_classes(data, &classes, true)
    }

    /// Maps rows onto a fixed class list. With `drop_unknown` false, a row
    /// of any other class is an error.
    pub fn with_classes(data: &PayloadDataset, classes: &[String], drop_unknown: bool) -> Result<Self> {
        let mut keep = Vec::new();
        let mut y = Vec::new();
        for (i, row) in data.rows.iter().enumerate() {
            let name = data.labels.name(row.label).unwrap_or("");
            match classes.iter().position(|c| c == name) {
                Some(c) => {
                    keep.push(i);
                    y.push(c);
                }
                None if drop_unknown => {}
                None => return invalid(format!("class {name:?} is not in the model's class list")),
            }
        }
        let sub = data.subset(&keep);
        Ok(Prepared {
            x: sub.features(),
            y,
            classes: classes.to_vec(),
            row_hashes: sub.rows.iter().map(|r| sha256_hex(r.bytes.as_bytes())).collect(),
        })
    }

    /// Rows of one class only.
    pub fn only_class(data: &PayloadDataset, class: &str) -> Result<Self> {
        let p = Self::with_classes(data, &[class.to_string()], true)?;
        if p.y.is_empty() {
            return invalid(format!("class {class:?} does not occur in the data"));
        }
        Ok(p)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidInput(format!("class {name:?} not present")))
    }

    pub fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (self.x.select(Axis(0), idx), idx.iter().map(|&i| self.y[i]).collect())
    }
}

/// The two nested halvings: DEC-Train / DEC-Test, then DEC-Test into
/// classifier train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub dec_train: Vec<usize>,
    pub dec_test: Vec<usize>,
    pub xgb_train: Vec<usize>,
    pub xgb_test: Vec<usize>,
}

pub fn partition(y: &[usize], seed: u64) -> Result<Partitions> {
    let halves = stratified_split(y, &[0.5, 0.5], seed)?;
    let (dec_train, dec_test) = (halves[0].clone(), halves[1].clone());
    let test_y: Vec<usize> = dec_test.iter().map(|&i| y[i]).collect();
    let inner = stratified_split(&test_y, &[0.5, 0.5], seed.wrapping_add(1))?;
    let map = |v: &Vec<usize>| v.iter().map(|&i| dec_test[i]).collect::<Vec<_>>();
    Ok(Partitions {
        xgb_train: map(&inner[0]),
        xgb_test: map(&inner[1]),
        dec_train,
        dec_test,
    })
}

impl Partitions {
    pub fn record(&self, m: &mut RunManifest, hashes: &[String]) {
        m.record_partition("dec_train", &self.dec_train, hashes, true);
        m.record_partition("xgb_train", &self.xgb_train, hashes, true);
        m.record_partition("xgb_test", &self.xgb_test, hashes, false);
        m.leakage_overlap = leakage_overlap(&[&self.dec_train, &self.xgb_train], &[&self.xgb_test], hashes);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub classes: Vec<String>,
    pub benign: usize,
    pub ae: Autoencoder,
    pub dec: DecModel,
    pub clf: TreeEnsemble,
}

impl FittedPipeline {
    pub fn latent(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.dec.transform(x)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        self.clf.predict(self.latent(x)?.view())
    }
}

/// Six-metric report for `clf` on latent rows; competence uses the
/// top-two probability margin as certainty.
pub fn evaluate(clf: &TreeEnsemble, z: ArrayView2<f64>, y: &[usize], benign: usize) -> Result<MetricsReport> {
    let p = clf.predict_proba_batch(z)?;
    let pred: Vec<usize> = p.rows().into_iter().map(|r| crate::nn::argmax(r.as_slice().unwrap())).collect();
    let certainty = p
        .rows()
        .into_iter()
        .map(|r| confidence_score(r.as_slice().unwrap()).map(|s| s.value))
        .collect::<Result<Vec<f64>>>()?;
    let f = EvalFrame::new(y.to_vec(), pred, benign)?.with_certainty(certainty)?;
    Ok(classification_report(&f))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FittedPipeline,
    pub report: MetricsReport,
    pub manifest: RunManifest,
    pub prepared: Prepared,
    pub partitions: Partitions,
    /// Latent rows for every prepared row.
    pub z: Array2<f64>,
    pub ae_trace: EpochLossTrace,
    pub dec_trace: EpochLossTrace,
}

pub(crate) fn fit_prepared(prep: Prepared, cfg: &PipelineConfig, task: &str) -> Result<FitOutcome> {
    cfg.validate()?;
    let benign = prep.class_index(&cfg.benign)?;
    let k = prep.class_count();
    let mut m = RunManifest::new(task, cfg)?;
    m.seeds.insert("split".into(), cfg.seed);
    m.seeds.insert("autoencoder".into(), cfg.autoencoder.train.seed);
    m.seeds.insert("cluster".into(), cfg.cluster.train.seed);
    m.seeds.insert("classifier".into(), cfg.classifier.seed);

    let parts = partition(&prep.y, cfg.seed)?;
    parts.record(&mut m, &prep.row_hashes);
    let (x_dec, y_dec) = prep.rows(&parts.dec_train);

    let a = &cfg.autoencoder;
    let (ae, ae_trace) = m.timed("autoencoder", || train_autoencoder(x_dec.view(), &a.spec, &a.train, &a.stop))?;
    let c = &cfg.cluster;
    let (dec, dec_trace) = m.timed("cluster", || train_dec(&ae, x_dec.view(), &y_dec, k, &c.train, &c.stop))?;
    let z = m.timed("encode", || dec.transform(prep.x.view()))?;

    let z_train = z.select(Axis(0), &parts.xgb_train);
    let y_train: Vec<usize> = parts.xgb_train.iter().map(|&i| prep.y[i]).collect();
    let clf = m.timed("classifier", || train(z_train.view(), &y_train, k, &cfg.classifier))?;

    let z_test = z.select(Axis(0), &parts.xgb_test);
    let y_test: Vec<usize> = parts.xgb_test.iter().map(|&i| prep.y[i]).collect();
    let report = evaluate(&clf, z_test.view(), &y_test, benign)?;
    m.metrics = report.clone();
    m.metrics.insert("autoencoder_epochs".into(), ae_trace.epochs() as f64);
    m.metrics.insert("cluster_epochs".into(), dec_trace.epochs() as f64);
    Ok(FitOutcome {
        model: FittedPipeline {
            classes: prep.classes.clone(),
            benign,
            ae,
            dec,
            clf,
        },
        report,
        manifest: m,
        prepared: prep,
        partitions: parts,
        z,
        ae_trace,
        dec_trace,
    })
}

/// Autoencoder on DEC-Train, clustering on DEC-Train, classifier on the
/// encoded classifier-train half of DEC-Test, evaluated on the other half.
pub fn fit_pipeline(data: &PayloadDataset, cfg: &PipelineConfig) -> Result<FitOutcome> {
    let prep = Prepared::from_dataset(data, &[])?;
    let mut out = fit_prepared(prep, cfg, "fit")?;
    out.manifest.datasets.insert("input".into(), data.digest());
    Ok(out)
}

/// Dense softmax network on raw payload features, trained on DEC-Train
/// plus classifier-train and evaluated on classifier-test.
pub fn fit_fcnn_baseline(
    prep: &Prepared,
    parts: &Partitions,
    cfg: &PipelineConfig,
) -> Result<(FcnnClassifier, MetricsReport)> {
    let benign = prep.class_index(&cfg.benign)?;
    let mut rows = parts.dec_train.clone();
    rows.extend(&parts.xgb_train);
    rows.sort_unstable();
    let (x, y) = prep.rows(&rows);
    let mut layers = cfg.fcnn.hidden.clone();
    layers.push(prep.class_count());
    let (net, _) = train_fcnn(x.view(), &y, prep.class_count(), &layers, &cfg.fcnn.train)?;
    let (xt, yt) = prep.rows(&parts.xgb_test);
    let pred = net.predict(xt.view())?;
    let f = EvalFrame::new(yt, pred, benign)?;
    Ok((net, classification_report(&f)))
}
