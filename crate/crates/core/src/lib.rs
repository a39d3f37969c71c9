//! Syntax-agnostic dependency-based semantic role labeling with a
//! predicate-flagged stacked BiLSTM encoder.
//!
//! The pipeline: [`conll`] reads CoNLL-2009 sentences, [`vocab`] builds
//! symbol inventories, [`model`] holds the parameters, [`encoder`] and
//! [`classifier`] score roles, [`train`] fits a model and [`eval`] scores
//! predictions.

pub mod ablation;
pub mod autodiff;
pub mod checkpoint;
pub mod classifier;
mod codec;
pub mod config;
pub mod conll;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod synthetic;
pub mod train;
pub mod vocab;

pub use checkpoint::Checkpoint;
pub use config::{AblationPreset, ClassifierVariant, Lang, ModelConfig};
pub use conll::{PredicateInstance, Sentence, Token};
pub use error::{Error, Result};
pub use eval::{Buckets, Counts, EvalOptions, EvalReport, SemDep};
pub use model::SrlModel;
pub use train::{TrainOutcome, TrainSchedule};
pub use vocab::{PretrainedTable, Vocabulary};
