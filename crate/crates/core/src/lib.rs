//! Triplet-loss metric learning over frozen face embeddings, with frame and
//! video level real/fake classification and evaluation.
//!
//! The pipeline: load or synthesize an [`EmbeddingDataset`], split it by
//! video, train a [`ProjectionHead`] with online semi-hard triplet mining,
//! fit frame classifiers (optionally bagged) on raw or projected
//! embeddings, aggregate frames to videos and report metrics.

pub mod classify;
mod codec;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fsio;
pub mod metrics;
pub mod metricspace;
pub mod par;
pub mod pipeline;
pub mod projviz;
pub mod rng;
pub mod synth;
pub mod triplet;

pub use dataset::{DatasetSplit, EmbeddingDataset, EmbeddingRecord, Label};
pub use error::{Error, Result};
pub use metricspace::{MiningStats, Triplet, TripletCategory};
pub use triplet::{ProjectionHead, TrainConfig, TrainReport};
