//! Gated graph network over program graphs: embedding plus selector input,
//! typed positional messages along forward and backward edges, GRU updates,
//! and a gated two-head readout.

pub mod batch;
pub mod linalg;
pub mod net;
pub mod params;
pub mod train;

use alloc::string::String;

pub use batch::{Batch, EdgeInput, EncodedGraph, Route};
pub use net::{
    initial_states, loss, loss_and_grads, position_encoding, predict, propagate, readout, readout_graph,
    readout_vertex,
};
pub use params::{Layout, ModelParameters, EDGE_TYPES};
pub use train::{
    evaluate, pack_batches, train, Adam, CheckpointRecord, Control, Example, Metrics, TrainError, TrainOutcome,
    TrainingData,
};

/// Width of the root-marking one-hot appended to each embedding.
pub const SELECTOR_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub timesteps: u32,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Upper bound on vertices packed into one mini-batch.
    pub batch_vertices: usize,
    /// Training instances drawn per epoch.
    pub max_epoch_graphs: usize,
    /// Training instances between validation checkpoints.
    pub checkpoint_every: usize,
    /// Total training instances before stopping.
    pub max_train_graphs: usize,
    /// Magnitude of the selector one-hot.
    pub selector_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            timesteps: 30,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_vertices: 512,
            max_epoch_graphs: usize::MAX,
            checkpoint_every: 10_000,
            max_train_graphs: 100_000,
            selector_scale: 50.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn hidden_dim(&self) -> usize {
        self.embed_dim + SELECTOR_DIM
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |s: &str| Err(ModelError::Config(String::from(s)));
        if self.embed_dim < 4 || self.embed_dim % 2 != 0 {
            return bad("embed_dim must be an even number of at least 4");
        }
        if self.timesteps < 1 {
            return bad("timesteps must be at least 1");
        }
        if self.batch_vertices == 0 || self.checkpoint_every == 0 || self.max_epoch_graphs == 0 {
            return bad("batch_vertices, checkpoint_every and max_epoch_graphs must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning_rate must be positive and betas in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite loss or activation")]
    NonFiniteLoss,
}
