use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dec::DecModel;
use crate::error::{Error, Result};
use crate::gbdt::TreeEnsemble;
use crate::nn::{Autoencoder, FcnnClassifier};
use crate::uq::Metamodel;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub rows: usize,
    /// Hash over the sorted per-row hashes.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// What went into a run and what came out of it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub datasets: BTreeMap<String, String>,
    pub partitions: BTreeMap<String, PartitionRecord>,
    pub training_partitions: Vec<String>,
    pub evaluation_partitions: Vec<String>,
    /// Rows whose content appears in both a training and an evaluation
    /// partition.
    pub leakage_overlap: usize,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(task: &str, config: &impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            task: task.to_string(),
            config: serde_json::to_value(config)?,
            ..Default::default()
        })
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }

    pub fn record_partition(&mut self, name: &str, rows: &[usize], row_hashes: &[String], training: bool) {
        let mut hs: Vec<&str> = rows.iter().map(|&r| row_hashes[r].as_str()).collect();
        hs.sort_unstable();
        self.partitions.insert(
            name.to_string(),
            PartitionRecord {
                rows: rows.len(),
                digest: sha256_hex(hs.concat().as_bytes()),
            },
        );
        if training {
            self.training_partitions.push(name.to_string());
        } else {
            self.evaluation_partitions.push(name.to_string());
        }
    }

    /// Writes `bytes` to `path` and records its digest under `name`.
    pub fn write_artifact(&mut self, name: &str, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactRecord {
                path: path.to_path_buf(),
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    /// Every recorded artifact exists and still hashes to its digest.
    pub fn verify_artifacts(&self) -> Result<()> {
        for (name, a) in &self.artifacts {
            let got = sha256_hex(&std::fs::read(&a.path)?);
            if got != a.sha256 {
                return Err(Error::Format(format!("artifact {name} at {} changed", a.path.display())));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Count of evaluation rows whose content hash also occurs in training.
pub fn leakage_overlap(train: &[&[usize]], eval: &[&[usize]], row_hashes: &[String]) -> usize {
    let seen: HashSet<&str> = train.iter().flat_map(|p| p.iter()).map(|&r| row_hashes[r].as_str()).collect();
    eval.iter()
        .flat_map(|p| p.iter())
        .filter(|&&r| seen.contains(row_hashes[r].as_str()))
        .count()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Autoencoder,
    Dec,
    Gbdt,
    Fcnn,
    Metamodel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Autoencoder(Autoencoder),
    Dec(DecModel),
    Gbdt(TreeEnsemble),
    Fcnn(FcnnClassifier),
    Metamodel(Metamodel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Autoencoder(_) => ModelKind::Autoencoder,
            Model::Dec(_) => ModelKind::Dec,
            Model::Gbdt(_) => ModelKind::Gbdt,
            Model::Fcnn(_) => ModelKind::Fcnn,
            Model::Metamodel(_) => ModelKind::Metamodel,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Model::Autoencoder(m) => m.to_bytes(),
            Model::Dec(m) => m.to_bytes(),
            Model::Gbdt(m) => m.to_bytes(),
            Model::Fcnn(m) => m.to_bytes(),
            Model::Metamodel(m) => m.to_bytes(),
        }
    }

    pub fn from_bytes(kind: ModelKind, buf: &[u8]) -> Result<Self> {
        Ok(match kind {
            ModelKind::Autoencoder => Model::Autoencoder(Autoencoder::from_bytes(buf)?),
            ModelKind::Dec => Model::Dec(DecModel::from_bytes(buf)?),
            ModelKind::Gbdt => Model::Gbdt(TreeEnsemble::from_bytes(buf)?),
            ModelKind::Fcnn => Model::Fcnn(FcnnClassifier::from_bytes(buf)?),
            ModelKind::Metamodel => Model::Metamodel(Metamodel::from_bytes(buf)?),
        })
    }
}

pub fn persist(model: &Model, path: &Path) -> Result<String> {
    let bytes = model.to_bytes();
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load(kind: ModelKind, path: &Path) -> Result<Model> {
    let buf = std::fs::read(path)?;
    Model::from_bytes(kind, &buf).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_counts_shared_content() {
        let h: Vec<String> = ["a", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(leakage_overlap(&[&[0, 1]], &[&[2]], &h), 0);
        assert_eq!(leakage_overlap(&[&[0, 1]], &[&[2, 3]], &h), 1);
    }

    #[test]
    fn artifacts_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("t", &serde_json::json!({"k": 1})).unwrap();
        let p = dir.path().join("sub/a.bin");
        m.write_artifact("a", &p, b"hello").unwrap();
        m.verify_artifacts().unwrap();
        std::fs::write(&p, b"hullo").unwrap();
        assert!(m.verify_artifacts().is_err());
        let mp = dir.path().join("m.json");
        m.save(&mp).unwrap();
        assert_eq!(RunManifest::load(&mp).unwrap(), m);
    }
}
