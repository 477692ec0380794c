//! Payload-byte network intrusion detection.
//!
//! The pipeline turns captured packets into 1500-byte payload vectors,
//! learns a 12-dimensional embedding with a denoising autoencoder refined by
//! deep embedded clustering, classifies embeddings with gradient-boosted
//! trees, and attaches uncertainty scores to every prediction.
//!
//! Modules map onto pipeline stages:
//!
//! - [`payload`]: libpcap parsing, header stripping, labeling, resampling
//! - [`nn`]: dense networks, the denoising autoencoder, the FcNN baseline
//! - [`dec`]: clustering layer, composite loss, joint refinement
//! - [`gbdt`]: boosted trees with regularized split gain and warm starts
//! - [`uq`]: score-based and metamodel-based uncertainty
//! - [`metrics`]: classification and uncertainty metrics
//! - [`pipeline`]: splits, transfer scenarios, open-set runs, persistence

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod dec;
pub mod error;
pub mod gbdt;
pub mod metrics;
pub mod nn;
pub mod payload;
pub mod pipeline;
pub mod stopping;
pub mod synth;
pub mod uq;

pub use error::{Error, Result};

/// Width of the standardized payload vector.
pub const PAYLOAD_LEN: usize = 1500;

/// Width of the embedding fed to the classifier.
pub const LATENT_DIM: usize = 12;
