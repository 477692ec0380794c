//! Experiment orchestration: deterministic stratified splits, the full
//! fit, transfer scenarios, the two uncertainty tasks, run manifests and
//! model files.

mod config;
mod fit;
mod manifest;
mod split;
mod transfer;
mod uq_run;

pub use config::{AeStage, ClusterStage, FcnnStage, MetaStage, PipelineConfig, TransferStage};
pub use fit::{evaluate, fit_fcnn_baseline, fit_pipeline, partition, FitOutcome, FittedPipeline, Partitions, Prepared};
pub use manifest::{
    leakage_overlap, load, persist, sha256_hex, write_atomic, ArtifactRecord, Model, ModelKind, PartitionRecord,
    RunManifest,
};
pub use split::{nested_portion, stratified_split, SplitSpec};
pub use transfer::{
    all_mode_triples, run_scenario, write_grid_csv, AeMode, ClfMode, ClusterMode, GridCell, ModeTriple, ScenarioConfig,
    ScenarioOutcome, SourceModels, TransferRunner, CASES,
};
pub use uq_run::{background_rows, run_misclassification, run_osr, UqMetrics, UqOutcome, TN_TARGET};
