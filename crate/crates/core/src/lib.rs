// SPDX-License-Identifier: MIT OR Apache-2.0

//! Time-series anomaly detection by nearest-neighbor distance to a memory
//! bank of patch embeddings.
//!
//! The pipeline: [`ingest`] cuts a labeled series into sliding windows,
//! an [`embedding`] provider (or a [`trep`] file exported from a foundation
//! model) turns each window into one representation, [`membank`] stores and
//! compresses the training representations, [`scoring`] measures each test
//! representation against the bank with optional test-time adaptation, and
//! [`eval`] reduces the scores to threshold-free accuracy metrics.

#![forbid(unsafe_code)]

pub mod embedding;
pub mod eval;
pub mod ingest;
pub mod membank;
pub mod scoring;
pub mod synth;
pub mod trep;

pub use embedding::{EmbeddingConfig, EmbeddingError, EmbeddingMatrix, EmbeddingProvider, SyntheticProvider};
pub use eval::{DatasetResult, EvalConfig, EvalError, Report, SweepAxis};
pub use ingest::{IngestError, Region, TimeSeriesRecord, Window, WindowSpec};
pub use membank::{BankError, MemoryBank, Neighbor, NoveltyModel, Provenance};
pub use scoring::{DistanceSpec, Neighborhood, ScoreSeries, ScoringError, StreamOutcome};
pub use trep::{TrepError, TrepMeta};

use thiserror::Error;

/// Any failure from the engine's modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Trep(#[from] TrepError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
