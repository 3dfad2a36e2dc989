//! Knowledge tracing with skill co-occurrence graphs and knowledge modes.
//!
//! The pipeline runs in order: [`corpus`] loads interaction logs and the
//! question/skill matrix, [`skillgraph`] derives the skill co-occurrence
//! graph and difficulty, [`modes`] turns every question into a padded mode
//! vector and compresses it with an autoencoder, [`embed`] propagates
//! embeddings over the question/skill bigraph, [`model`] evolves the
//! student state and predicts answers, and [`harness`] trains, evaluates
//! and compares models. [`synth`] generates logs with a planted
//! path-dependent response process.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod harness;
pub mod model;
pub mod modes;
pub mod params;
pub mod skillgraph;
pub mod synth;
pub mod tape;

pub use corpus::{load_interactions, split_train_test, InteractionLog, QsMatrix};
pub use error::{KtError, Result};
pub use model::{KtModel, ModelConfig, RecapMode, Variant};
