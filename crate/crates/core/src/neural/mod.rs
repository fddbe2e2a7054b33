//! Small neural toolkit: a differentiable graph, recurrent/convolutional
//! layers, the generator and critic architectures, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod models;
pub mod params;

use thiserror::Error;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use graph::{Graph, Var};
pub use layers::Activation;
pub use models::{
    BiLstmConfig, Critic, CriticOutput, DiscriminatorConfig, GeneratorConfig, ModelSpec,
};
pub use params::{grad, BoundParams, LayerGrads, ModelParams};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: String, detail: String },
    #[error("non-finite value produced by op `{op}`")]
    NonFinite { op: String },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGrad { name: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NeuralError {
    pub(crate) fn shape(context: &str, detail: impl Into<String>) -> Self {
        NeuralError::Shape {
            context: context.to_string(),
            detail: detail.into(),
        }
    }
}
