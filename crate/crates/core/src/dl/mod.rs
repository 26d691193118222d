//! Dependency-free neural network kernel.
//!
//! Networks are ordered stacks of [`Layer`]s over `f64` data. Training is
//! mini-batch SGD with analytic back-propagation; every random draw comes
//! from a named [`RandomStream`](crate::des::RandomStream) so results are
//! reproducible bit for bit.

mod builders;
mod dataset;
mod ensemble;
mod layer;
mod loss;
mod network;
mod optimizer;
mod selection;
mod serialize;
mod tensor;
mod testing;
mod train;

use thiserror::Error;

pub use builders::{build_lenet, NetworkSpec, OutputKind};
pub use dataset::{DataSet, Split};
pub use ensemble::{argmax, soft_vote, EnsembleModel};
pub use layer::{
    output_extent, softmax, Activation, Bounding, Conv2d, Dense, Layer, LayerGradient, PoolMode,
    Pooling, Scaling, Unscaling,
};
pub use loss::{loss, LossIndex, CROSS_ENTROPY_FLOOR};
pub use network::{backward, Gradients, NeuralNetwork};
pub use optimizer::{sgd_step, Sgd};
pub use selection::{select_model, Candidate, CandidateModel, CandidateReport, Selection};
pub use serialize::{digest, from_bytes, to_bytes, MODEL_FORMAT_VERSION};
pub use tensor::Tensor;
pub use testing::{evaluate, evaluate_with, Predictor, TestingReport};
pub use train::{train, StopReason, TrainingReport, TrainingStrategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DlError {
    #[error("layer {layer} ({kind}) expects input shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed model: {0}")]
    Malformed(String),
}
