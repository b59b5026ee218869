//! Dialect identification with hashed character and word n-grams.
//!
//! A text becomes a bag of hashed n-gram ids, the ids index rows of an
//! embedding table, the averaged embedding is projected to one logit per
//! dialect, and a softmax turns logits into a distribution. Training is plain
//! SGD on the multinomial log loss with a linearly decaying learning rate.

mod autotune;
mod eval;
mod features;
mod format;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use autotune::{autotune, AutotuneOutcome, Budget};
pub use eval::{evaluate, ClassScores, EvalReport};
pub use features::{featurize, fnv1a64};
pub use model::{PredictionDistribution, TrainedModel};
pub use train::{
    output_gradient, split_train_test, train, train_with_history, Dataset, LabeledText, Split,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data covers fewer than two labels")]
    SingleClassCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("no configuration fits within {max_bytes} bytes")]
    NoFeasibleModel { max_bytes: u64 },
    #[error("label {0} is not part of the model's label index")]
    UnknownLabel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid model file: {0}")]
    ModelFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters of one model. Also the autotune search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub char_ngram_min: u8,
    pub char_ngram_max: u8,
    /// 0 disables word features; 1 adds unigrams, 2 adds bigrams too.
    pub word_ngram_max: u8,
    pub hash_buckets: u32,
    pub embedding_dim: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_ngram_min: 2,
            char_ngram_max: 5,
            word_ngram_max: 1,
            hash_buckets: 1 << 14,
            embedding_dim: 16,
            learning_rate: 0.5,
            epochs: 15,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration autotune tries first.
    pub fn minimal(seed: u64) -> Self {
        Self {
            char_ngram_min: 2,
            char_ngram_max: 4,
            word_ngram_max: 1,
            hash_buckets: 1 << 12,
            embedding_dim: 8,
            learning_rate: 0.5,
            epochs: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(1 <= self.char_ngram_min && self.char_ngram_min <= self.char_ngram_max && self.char_ngram_max <= 6) {
            return bad("char n-gram range must satisfy 1 <= min <= max <= 6");
        }
        if self.word_ngram_max > 2 {
            return bad("word_ngram_max must be 0, 1 or 2");
        }
        if !self.hash_buckets.is_power_of_two() || self.hash_buckets < (1 << 12) {
            return bad("hash_buckets must be a power of two >= 4096");
        }
        if self.embedding_dim < 4 {
            return bad("embedding_dim must be >= 4");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        Ok(())
    }
}
