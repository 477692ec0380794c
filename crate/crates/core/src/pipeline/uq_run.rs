use std::collections::{BTreeMap, HashSet};

use ndarray::{concatenate, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit_prepared, FitOutcome, Prepared};
use super::manifest::RunManifest;
use super::split::stratified_split;
use super::PipelineConfig;
use crate::error::{invalid, Result};
use crate::metrics::{auroc, tp_at_tn};
use crate::uq::{build_meta_dataset, score_with, train_metamodel, MetaVariant, Metamodel, UqMethod};

pub const TN_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UqMetrics {
    pub auroc: f64,
    pub tp_at_tn: f64,
    pub threshold: f64,
    pub low_negative_count: bool,
}

impl UqMetrics {
    pub fn compute(uncertainty: &[f64], positive: &[bool]) -> Result<Self> {
        let t = tp_at_tn(uncertainty, positive, TN_TARGET)?;
        Ok(UqMetrics {
            auroc: auroc(uncertainty, positive)?,
            tp_at_tn: t.tpr,
            threshold: t.threshold,
            low_negative_count: t.low_negative_count,
        })
    }
}

#[derive(Debug, Clone)]
pub struct UqOutcome {
    pub methods: BTreeMap<UqMethod, UqMetrics>,
    /// Per-method uncertainty over the evaluation rows.
    pub scores: Vec<(UqMethod, Vec<f64>)>,
    /// Evaluation labels; true marks the event being detected.
    pub labels: Vec<bool>,
    pub metamodels: BTreeMap<MetaVariant, Metamodel>,
    pub fit: FitOutcome,
    pub manifest: RunManifest,
}

struct MetaStage {
    models: BTreeMap<MetaVariant, Metamodel>,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    test_labels: Vec<usize>,
}

/// Correctness labels on classifier-test, correct rows subsampled, split into
/// metamodel train/test stratified by label, one metamodel per variant.
fn meta_stage(fit: &FitOutcome, cfg: &PipelineConfig, m: &mut RunManifest) -> Result<MetaStage> {
    let mc = &cfg.metamodel;
    let seed = mc.params.seed;
    m.seeds.insert("metamodel".into(), seed);
    let xt = &fit.partitions.xgb_test;
    let z = fit.z.select(Axis(0), xt);
    let y: Vec<usize> = xt.iter().map(|&i| fit.prepared.y[i]).collect();
    let clf = &fit.model.clf;

    let prob = build_meta_dataset(clf, z.view(), &y, MetaVariant::Prob, mc.ratio, seed, None)?;
    let split = stratified_split(&prob.y, &[1.0 - mc.test_fraction, mc.test_fraction], seed.wrapping_add(1))?;
    let (train_local, test_local) = (&split[0], &split[1]);
    let train_src: Vec<usize> = train_local.iter().map(|&r| prob.source_rows[r]).collect();
    let bg_rows = background_rows(&train_src, mc.background_rows, seed);
    let background = z.select(Axis(0), &bg_rows);

    let mut models = BTreeMap::new();
    for v in MetaVariant::ALL {
        let md = match v {
            MetaVariant::Prob => prob.clone(),
            MetaVariant::Shap => build_meta_dataset(clf, z.view(), &y, v, mc.ratio, seed, Some(background.view()))?,
            MetaVariant::Ig => build_meta_dataset(clf, z.view(), &y, v, mc.ratio, seed, None)?,
        };
        debug_assert_eq!(md.source_rows, prob.source_rows);
        let train_md = md.subset(train_local);
        let mm = m.timed(&format!("metamodel_{}", v.name()), || train_metamodel(&train_md, &mc.params))?;
        models.insert(v, mm);
    }
    let global = |local: &[usize]| local.iter().map(|&r| xt[prob.source_rows[r]]).collect::<Vec<_>>();
    Ok(MetaStage {
        models,
        train_rows: global(train_local),
        test_rows: global(test_local),
        test_labels: test_local.iter().map(|&r| prob.y[r]).collect(),
    })
}

/// Up to `n` of the metamodel-train rows, drawn without replacement and
/// returned in ascending order.
pub fn background_rows(train_rows: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let n = n.min(train_rows.len());
    let mut rows: Vec<usize> = sample(&mut rng, train_rows.len(), n).into_iter().map(|i| train_rows[i]).collect();
    rows.sort_unstable();
    rows
}

type MethodScores = Vec<(UqMethod, Vec<f64>)>;

fn score_all(
    fit: &FitOutcome,
    metas: &BTreeMap<MetaVariant, Metamodel>,
    z: ndarray::ArrayView2<f64>,
    positive: &[bool],
    m: &mut RunManifest,
) -> Result<(BTreeMap<UqMethod, UqMetrics>, MethodScores)> {
    let mut methods = BTreeMap::new();
    let mut scores = Vec::new();
    for method in UqMethod::ALL {
        let meta = method.variant().and_then(|v| metas.get(&v));
        let s = m.timed(&format!("score_{}", method.name()), || score_with(method, &fit.model.clf, z, meta))?;
        let r = UqMetrics::compute(&s, positive)?;
        m.metrics.insert(format!("{}_auroc", method.name()), r.auroc);
        m.metrics.insert(format!("{}_tp_at_tn", method.name()), r.tp_at_tn);
        if r.low_negative_count {
            m.notes.push(format!("{method}: fewer than 20 negatives; TP@TN threshold is poorly resolved"));
        }
        methods.insert(method, r);
        scores.push((method, s));
    }
    Ok((methods, scores))
}

fn record_meta(m: &mut RunManifest, fit: &FitOutcome, stage: &MetaStage) {
    let h = &fit.prepared.row_hashes;
    m.record_partition("meta_train", &stage.train_rows, h, true);
    m.record_partition("meta_test", &stage.test_rows, h, false);
}

fn training_hashes<'a>(fit: &'a FitOutcome, stage: &MetaStage) -> HashSet<&'a str> {
    let p = &fit.partitions;
    p.dec_train
        .iter()
        .chain(&p.xgb_train)
        .chain(&stage.train_rows)
        .map(|&i| fit.prepared.row_hashes[i].as_str())
        .collect()
}

/// Detecting the base classifier's own errors on metamodel-test rows.
pub fn run_misclassification(data: &crate::payload::PayloadDataset, cfg: &PipelineConfig) -> Result<UqOutcome> {
    let prep = Prepared::from_dataset(data, &[])?;
    let fit = fit_prepared(prep, cfg, "misclassification")?;
    let mut m = fit.manifest.clone();
    m.datasets.insert("input".into(), data.digest());
    m.metrics.clear();
    m.evaluation_partitions.clear();
    m.partitions.remove("xgb_test");
    let stage = meta_stage(&fit, cfg, &mut m)?;
    record_meta(&mut m, &fit, &stage);
    let seen = training_hashes(&fit, &stage);
    m.leakage_overlap = stage
        .test_rows
        .iter()
        .filter(|&&i| seen.contains(fit.prepared.row_hashes[i].as_str()))
        .count();

    let z = fit.z.select(Axis(0), &stage.test_rows);
    let positive: Vec<bool> = stage.test_labels.iter().map(|&l| l == 1).collect();
    let (methods, scores) = score_all(&fit, &stage.models, z.view(), &positive, &mut m)?;
    Ok(UqOutcome {
        methods,
        scores,
        labels: positive,
        metamodels: stage.models,
        fit,
        manifest: m,
    })
}

/// One class is removed before any training; the evaluation set mixes
/// equal numbers of its rows and metamodel-test rows, the former positive.
pub fn run_osr(data: &crate::payload::PayloadDataset, unknown: &str, cfg: &PipelineConfig) -> Result<UqOutcome> {
    if data.labels.id(unknown).is_none_or(|id| !data.class_counts().contains_key(&id)) {
        return invalid(format!("unknown class {unknown:?} does not occur in the data"));
    }
    let holdout = Prepared::only_class(data, unknown)?;
    let prep = Prepared::from_dataset(data, &[unknown])?;
    let fit = fit_prepared(prep, cfg, "osr")?;
    let mut m = fit.manifest.clone();
    m.datasets.insert("input".into(), data.digest());
    m.metrics.clear();
    m.evaluation_partitions.clear();
    m.partitions.remove("xgb_test");
    let stage = meta_stage(&fit, cfg, &mut m)?;
    record_meta(&mut m, &fit, &stage);

    let n = stage.test_rows.len().min(holdout.y.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(11));
    let mut known: Vec<usize> = sample(&mut rng, stage.test_rows.len(), n).into_iter().map(|i| stage.test_rows[i]).collect();
    let mut unk: Vec<usize> = sample(&mut rng, holdout.y.len(), n).into_vec();
    known.sort_unstable();
    unk.sort_unstable();
    m.record_partition("holdout", &unk, &holdout.row_hashes, false);

    let seen = training_hashes(&fit, &stage);
    m.leakage_overlap = known
        .iter()
        .map(|&i| fit.prepared.row_hashes[i].as_str())
        .chain(unk.iter().map(|&i| holdout.row_hashes[i].as_str()))
        .filter(|h| seen.contains(h))
        .count();

    let z_unknown = m.timed("encode_holdout", || fit.model.dec.transform(holdout.x.select(Axis(0), &unk).view()))?;
    let z = concatenate(Axis(0), &[fit.z.select(Axis(0), &known).view(), z_unknown.view()])
        .expect("same latent width");
    let positive: Vec<bool> = (0..2 * n).map(|i| i >= n).collect();
    let (methods, scores) = score_all(&fit, &stage.models, z.view(), &positive, &mut m)?;
    Ok(UqOutcome {
        methods,
        scores,
        labels: positive,
        metamodels: stage.models,
        fit,
        manifest: m,
    })
}
