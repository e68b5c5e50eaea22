//! Convolutional classifier: layers, reverse-mode gradients, Nadam,
//! early-stopped training and the `RMDL` checkpoint format.

mod checkpoint;
mod layers;
mod network;
mod optim;
mod real;
mod tensor;
mod train;

pub use checkpoint::{load_model, read_model, save_model, write_model, HEADER_LEN, MAGIC, VERSION};
pub use layers::{
    conv2d_image, relu, softmax, BatchNorm, Conv2d, ConvGeometry, Dense, Dropout, MaxPool, Padding,
};
pub use network::{
    argmax, example_gradients, weighted_cross_entropy, Architecture, Cache, Gradients, Layer,
    LayerKind, Network, LOSS_EPS,
};
pub use optim::{Nadam, NadamConfig};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{
    train, EarlyStopping, EpochRecord, LabeledSamples, StopDecision, TrainConfig, TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("architecture error: {0}")]
    Architecture(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
