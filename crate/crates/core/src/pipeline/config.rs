use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gbdt::BoostParams;
use crate::nn::{AutoencoderSpec, TrainConfig};
use crate::payload::BENIGN;
use crate::stopping::EarlyStop;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeStage {
    pub spec: AutoencoderSpec,
    pub train: TrainConfig,
    pub stop: EarlyStop,
}

impl Default for AeStage {
    fn default() -> Self {
        AeStage {
            spec: AutoencoderSpec::default(),
            train: TrainConfig {
                max_epochs: 30,
                ..TrainConfig::default()
            },
            stop: EarlyStop { eta: 10, delta: 0.0005 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterStage {
    pub train: TrainConfig,
    pub stop: EarlyStop,
}

impl Default for ClusterStage {
    fn default() -> Self {
        ClusterStage {
            train: TrainConfig {
                max_epochs: 30,
                ..TrainConfig::default()
            },
            stop: EarlyStop { eta: 10, delta: 0.005 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaStage {
    pub params: BoostParams,
    /// Correct rows kept per misclassified row.
    pub ratio: f64,
    pub background_rows: usize,
    pub test_fraction: f64,
}

impl Default for MetaStage {
    fn default() -> Self {
        MetaStage {
            params: BoostParams::default(),
            ratio: 5.0,
            background_rows: 32,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcnnStage {
    /// Hidden layer widths; the output layer is sized to the class count.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for FcnnStage {
    fn default() -> Self {
        FcnnStage {
            hidden: vec![1024, 512],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferStage {
    /// Multiplier on the from-scratch learning rate when fine-tuning the
    /// autoencoder or the clustering model.
    pub finetune_lr_scale: f64,
    /// Extra boosting rounds when fine-tuning the classifier; `None` uses
    /// the classifier's own round count.
    pub finetune_rounds: Option<usize>,
    pub portions: Vec<f64>,
}

impl Default for TransferStage {
    fn default() -> Self {
        TransferStage {
            finetune_lr_scale: 0.1,
            finetune_rounds: None,
            portions: vec![0.10, 0.25, 0.50, 0.75],
        }
    }
}

/// Every stage's settings in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the data splits.
    pub seed: u64,
    pub benign: String,
    pub autoencoder: AeStage,
    pub cluster: ClusterStage,
    pub classifier: BoostParams,
    pub metamodel: MetaStage,
    pub fcnn: FcnnStage,
    pub transfer: TransferStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            benign: BENIGN.to_string(),
            autoencoder: AeStage::default(),
            cluster: ClusterStage::default(),
            classifier: BoostParams::default(),
            metamodel: MetaStage::default(),
            fcnn: FcnnStage::default(),
            transfer: TransferStage::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the split seed and derives every stage seed from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.autoencoder.train.seed = seed.wrapping_add(1);
        self.cluster.train.seed = seed.wrapping_add(2);
        self.classifier.seed = seed.wrapping_add(3);
        self.metamodel.params.seed = seed.wrapping_add(4);
        self.fcnn.train.seed = seed.wrapping_add(5);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.autoencoder.train.validate()?;
        self.autoencoder.stop.validate()?;
        self.cluster.train.validate()?;
        self.cluster.stop.validate()?;
        self.classifier.validate()?;
        self.metamodel.params.validate()?;
        self.fcnn.train.validate()?;
        if !(self.metamodel.ratio > 0.0) || self.metamodel.background_rows == 0 {
            return invalid("metamodel ratio and background size must be positive");
        }
        if !(self.metamodel.test_fraction > 0.0 && self.metamodel.test_fraction < 1.0) {
            return invalid("metamodel test fraction must be in (0, 1)");
        }
        if !(self.transfer.finetune_lr_scale > 0.0) {
            return invalid("fine-tune learning-rate scale must be positive");
        }
        if self.transfer.portions.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return invalid("transfer portions must lie in (0, 1]");
        }
        Ok(())
    }
}
