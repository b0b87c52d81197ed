//! Multi-domain emotion classification with compact shared embeddings.
//!
//! Utterance or image features from several corpora pass through one shared
//! embedding head and a linear classifier per corpus. Training minimizes a
//! class- and corpus-weighted cross-entropy with Adam. The embedding can be
//! learned (`cake`), normalized onto the unit sphere (`cake-norm`), replaced
//! by arousal-valence values (`av`), or concatenated with them (`avk`).
//!
//! ```
//! use cake::datamodel::{synth_generate, SynthConfig};
//! use cake::model::{ModelConfig, Variant};
//! use cake::trainer::{evaluate, train, TrainConfig};
//!
//! let synth = SynthConfig { dim: 16, train_counts: vec![140, 40, 20], test_counts: vec![70, 20, 10], ..Default::default() };
//! let (train_set, test_set) = synth_generate(&synth)?;
//! let mut cfg = TrainConfig::new(ModelConfig::new(Variant::Cake, 3, 16, 3));
//! cfg.max_epochs = 5;
//! let (params, history) = train(&train_set, &test_set, &cfg)?;
//! let report = evaluate(&params, &cfg.model, &test_set)?;
//! assert_eq!(history.best_weighted_f1(), Some(report.weighted_f1));
//! # Ok::<(), cake::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use thiserror::Error;

pub mod checkpoint;
pub mod cli;
pub mod datamodel;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod optim;
pub mod trainer;
pub mod vizmap;

pub use checkpoint::Checkpoint;
pub use datamodel::{DatasetBundle, EmotionClass, FeatureRecord};
pub use model::{ModelConfig, ModelParams, Variant};
pub use trainer::{TrainConfig, TrainHistory};

/// Any error of the crate, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerics: {0}")]
    Numerics(#[from] numerics::NumericsError),
    #[error("datamodel: {0}")]
    Data(#[from] datamodel::DataError),
    #[error("model: {0}")]
    Model(#[from] model::ModelError),
    #[error("objective: {0}")]
    Objective(#[from] objective::ObjectiveError),
    #[error("optim: {0}")]
    Optim(#[from] optim::OptimError),
    #[error("metrics: {0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("trainer: {0}")]
    Train(#[from] trainer::TrainError),
    #[error("vizmap: {0}")]
    Viz(#[from] vizmap::VizError),
}

impl Error {
    /// Name of the module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Numerics(_) => "numerics",
            Error::Data(_) => "datamodel",
            Error::Model(_) => "model",
            Error::Objective(_) => "objective",
            Error::Optim(_) => "optim",
            Error::Metrics(_) => "metrics",
            Error::Checkpoint(_) => "checkpoint",
            Error::Train(_) => "trainer",
            Error::Viz(_) => "vizmap",
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/variants.md")]
    mod variants {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    mod gradients {}
    #[doc = include_str!("../../../book/src/adam.md")]
    mod adam {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/checkpoints.md")]
    mod checkpoints {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
