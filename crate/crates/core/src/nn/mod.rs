//! Sequential CNN engine with a pluggable scalar multiplier.

pub mod archive;
pub mod idx;
pub mod layers;
pub mod network;
pub mod spec;

pub use archive::TensorArchive;
pub use idx::{load_idx_images, load_idx_labels, load_mnist, Dataset, Split};
pub use network::{
    backward_input_grad, load_weights, save_weights, train_sgd, train_sgd_with, ApproxScope, Arithmetic, EpochStats,
    Gradients, Model, TrainConfig, Weights,
};
pub use spec::{Layer, ModelSpec, ParamSlot};
