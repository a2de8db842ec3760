//! Next-token sequence model: token embedding, stacked LSTM layers, an
//! attention-weighted average over the embedding and every LSTM layer
//! output, and a softmax output layer. Gradients are derived by hand for
//! this fixed architecture.

mod adam;
mod checkpoint;
mod gradcheck;
mod linalg;
mod model;
mod params;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{ModelCheckpoint, TrainingMeta, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, BlockError, GradCheckConfig, GradCheckReport};
pub use model::{
    forward, forward_logits, loss_and_gradients, loss_and_gradients_runs, Example, Run, StreamState,
};
pub use params::{Block, Parameters};

/// RNG used for dropout masks, initialization and sampling.
pub type ModelRng = ChaCha8Rng;

/// How context reaches the next-token prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Every prediction sees only the trailing `max_length` tokens, run from
    /// a fresh recurrent state.
    #[default]
    Windowed,
    /// Recurrent state is carried across the whole sequence; attention still
    /// covers only the trailing `max_length` timesteps.
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub layer_size: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub max_length: usize,
    #[serde(default)]
    pub context: ContextMode,
    pub seed: u64,
}

impl ModelConfig {
    /// Hyperparameters 128/128/6/0.1/60 for the given vocabulary.
    pub fn with_vocab(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embedding_size: 128,
            layer_size: 128,
            n_layers: 6,
            dropout: 0.1,
            max_length: 60,
            context: ContextMode::Windowed,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embedding_size == 0 || self.layer_size == 0 || self.n_layers == 0 {
            return Err(Error::Config(format!("model sizes must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_length == 0 {
            return Err(Error::Config("max_length must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of the concatenated embedding + LSTM outputs seen by attention.
    pub fn concat_size(&self) -> usize {
        self.embedding_size + self.n_layers * self.layer_size
    }
}

/// Forward-pass mode. Dropout masks are drawn from the supplied RNG in train mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ModelRng),
}

impl Mode<'_> {
    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(rng) => Mode::Train(rng),
        }
    }
}
