use std::collections::HashMap;
use std::io::Write;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::fit::{evaluate, partition, FittedPipeline, Partitions, Prepared};
use super::manifest::RunManifest;
use super::split::nested_portion;
use super::PipelineConfig;
use crate::dec::{train_dec, DecModel};
use crate::error::{invalid, Result};
use crate::gbdt::{continue_training, train, TreeEnsemble};
use crate::metrics::MetricsReport;
use crate::nn::{Autoencoder, TrainConfig};
use crate::payload::PayloadDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeMode {
    AsIs,
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    FineTune,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClfMode {
    Train,
    FineTune,
}

pub type ModeTriple = (AeMode, ClusterMode, ClfMode);

/// The six accepted combinations, numbered 1 to 6.
pub const CASES: [ModeTriple; 6] = [
    (AeMode::FineTune, ClusterMode::Train, ClfMode::Train),
    (AeMode::AsIs, ClusterMode::FineTune, ClfMode::Train),
    (AeMode::AsIs, ClusterMode::Train, ClfMode::Train),
    (AeMode::FineTune, ClusterMode::Train, ClfMode::FineTune),
    (AeMode::AsIs, ClusterMode::FineTune, ClfMode::FineTune),
    (AeMode::AsIs, ClusterMode::Train, ClfMode::FineTune),
];

pub fn all_mode_triples() -> Vec<ModeTriple> {
    let mut out = Vec::with_capacity(8);
    for ae in [AeMode::AsIs, AeMode::FineTune] {
        for cl in [ClusterMode::FineTune, ClusterMode::Train] {
            for clf in [ClfMode::Train, ClfMode::FineTune] {
                out.push((ae, cl, clf));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ae: AeMode,
    pub cluster: ClusterMode,
    pub clf: ClfMode,
    /// Fraction of DEC-Train used for the autoencoder and clustering stages.
    pub portion: f64,
}

impl ScenarioConfig {
    pub fn case(number: usize, portion: f64) -> Result<Self> {
        let Some(&(ae, cluster, clf)) = number.checked_sub(1).and_then(|i| CASES.get(i)) else {
            return invalid(format!("no transfer case {number}; cases are 1 to 6"));
        };
        let sc = ScenarioConfig {
            ae,
            cluster,
            clf,
            portion,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// A fine-tuned autoencoder changes the encoder under the source
    /// clustering model, so that model cannot be reused.
    pub fn validate(&self) -> Result<()> {
        if self.ae == AeMode::FineTune && self.cluster == ClusterMode::FineTune {
            return invalid("a fine-tuned autoencoder requires training the clustering stage");
        }
        if !(self.portion > 0.0 && self.portion <= 1.0) {
            return invalid(format!("portion {} outside (0, 1]", self.portion));
        }
        Ok(())
    }

    pub fn case_number(&self) -> Option<usize> {
        CASES
            .iter()
            .position(|&c| c == (self.ae, self.cluster, self.clf))
            .map(|i| i + 1)
    }
}

/// Models trained on the source corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModels {
    pub classes: Vec<String>,
    pub ae: Autoencoder,
    pub dec: DecModel,
    pub clf: TreeEnsemble,
}

impl From<FittedPipeline> for SourceModels {
    fn from(p: FittedPipeline) -> Self {
        SourceModels {
            classes: p.classes,
            ae: p.ae,
            dec: p.dec,
            clf: p.clf,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioConfig,
    pub case: Option<usize>,
    pub accuracy: f64,
    pub report: MetricsReport,
    pub manifest: RunManifest,
}

type StageKey = (AeMode, ClusterMode, u64);

/// Runs scenarios against one target corpus, sharing the split and any
/// autoencoder/clustering work between scenarios that agree on it.
pub struct TransferRunner<'a> {
    source: &'a SourceModels,
    prep: Prepared,
    parts: Partitions,
    cfg: PipelineConfig,
    target_digest: String,
    cache: HashMap<StageKey, (DecModel, f64)>,
}

fn scaled(t: &TrainConfig, scale: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: t.learning_rate * scale,
        ..*t
    }
}

impl<'a> TransferRunner<'a> {
    pub fn new(source: &'a SourceModels, target: &PayloadDataset, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let prep = Prepared::with_classes(target, &source.classes, false)?;
        let parts = partition(&prep.y, cfg.seed)?;
        Ok(TransferRunner {
            source,
            prep,
            parts,
            cfg: cfg.clone(),
            target_digest: target.digest(),
            cache: HashMap::new(),
        })
    }

    fn clustering(&mut self, sc: &ScenarioConfig) -> Result<(DecModel, f64, bool)> {
        let key = (sc.ae, sc.cluster, sc.portion.to_bits());
        if let Some((dec, secs)) = self.cache.get(&key) {
            return Ok((dec.clone(), *secs, true));
        }
        let t = std::time::Instant::now();
        let dec_y: Vec<usize> = self.parts.dec_train.iter().map(|&i| self.prep.y[i]).collect();
        let local = nested_portion(&dec_y, sc.portion, self.cfg.seed.wrapping_add(7))?;
        let rows: Vec<usize> = local.iter().map(|&i| self.parts.dec_train[i]).collect();
        let (x, y) = self.prep.rows(&rows);
        let scale = self.cfg.transfer.finetune_lr_scale;
        let (a, c) = (&self.cfg.autoencoder, &self.cfg.cluster);
        let mut ae = self.source.ae.clone();
        if sc.ae == AeMode::FineTune {
            ae.fit(x.view(), &scaled(&a.train, scale), &a.stop)?;
        }
        let dec = match sc.cluster {
            ClusterMode::Train => train_dec(&ae, x.view(), &y, self.prep.class_count(), &c.train, &c.stop)?.0,
            ClusterMode::FineTune => {
                let mut d = self.source.dec.clone();
                d.refine(x.view(), &y, &scaled(&c.train, scale), &c.stop)?;
                d
            }
        };
        let secs = t.elapsed().as_secs_f64();
        self.cache.insert(key, (dec.clone(), secs));
        Ok((dec, secs, false))
    }

    pub fn run(&mut self, sc: &ScenarioConfig) -> Result<ScenarioOutcome> {
        sc.validate()?;
        let benign = self.prep.class_index(&self.cfg.benign)?;
        let mut m = RunManifest::new("transfer", &(&self.cfg, sc))?;
        m.datasets.insert("target".into(), self.target_digest.clone());
        m.seeds.insert("split".into(), self.cfg.seed);
        self.parts.record(&mut m, &self.prep.row_hashes);

        let (dec, secs, cached) = self.clustering(sc)?;
        m.timings.insert("autoencoder_and_cluster".into(), secs);
        if cached {
            m.notes.push("autoencoder and clustering stages reused from an earlier scenario".into());
        }
        let z = dec.transform(self.prep.x.view())?;
        let (zt, yt) = (z.select(Axis(0), &self.parts.xgb_train), self.labels(&self.parts.xgb_train));
        let k = self.prep.class_count();
        let clf = m.timed("classifier", || match sc.clf {
            ClfMode::Train => train(zt.view(), &yt, k, &self.cfg.classifier),
            ClfMode::FineTune => {
                let rounds = self.cfg.transfer.finetune_rounds.unwrap_or(self.cfg.classifier.rounds);
                continue_training(&self.source.clf, zt.view(), &yt, &self.cfg.classifier, rounds)
            }
        })?;
        let ze = z.select(Axis(0), &self.parts.xgb_test);
        let report = evaluate(&clf, ze.view(), &self.labels(&self.parts.xgb_test), benign)?;
        m.metrics = report.clone();
        Ok(ScenarioOutcome {
            scenario: *sc,
            case: sc.case_number(),
            accuracy: report["multiclass_accuracy"],
            report,
            manifest: m,
        })
    }

    fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.prep.y[i]).collect()
    }

    /// Every case at every portion, portions outermost.
    pub fn grid(&mut self, portions: &[f64]) -> Result<Vec<GridCell>> {
        let mut out = Vec::new();
        for &portion in portions {
            for case in 1..=CASES.len() {
                let r = self.run(&ScenarioConfig::case(case, portion)?)?;
                out.push(GridCell {
                    case,
                    portion,
                    accuracy: r.accuracy,
                });
            }
        }
        Ok(out)
    }
}

pub fn run_scenario(
    sc: &ScenarioConfig,
    source: &SourceModels,
    target: &PayloadDataset,
    cfg: &PipelineConfig,
) -> Result<ScenarioOutcome> {
    sc.validate()?;
    TransferRunner::new(source, target, cfg)?.run(sc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub case: usize,
    pub portion: f64,
    pub accuracy: f64,
}

/// One row per portion, one accuracy column per case.
pub fn write_grid_csv<W: Write>(cells: &[GridCell], out: W) -> Result<()> {
    let mut portions: Vec<f64> = Vec::new();
    for c in cells {
        if !portions.contains(&c.portion) {
            portions.push(c.portion);
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["portion".to_string()];
    header.extend((1..=CASES.len()).map(|c| format!("case{c}")));
    w.write_record(&header)?;
    for p in portions {
        let mut rec = vec![format!("{p}")];
        for case in 1..=CASES.len() {
            let v = cells.iter().find(|c| c.portion == p && c.case == case);
            rec.push(v.map_or(String::new(), |c| format!("{:.6}", c.accuracy)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
