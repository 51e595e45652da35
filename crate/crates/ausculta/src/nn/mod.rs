//! Minimal neural-network stack: tensors, a tape autodiff engine, the
//! contrastive encoder/projector/bilinear model, Adam, checkpointing,
//! and finite-difference gradient verification.

pub mod adam;
pub mod checkpoint;
pub mod grad_check;
pub mod graph;
pub mod model;
pub mod tensor;

pub use adam::Adam;
pub use graph::{diagonal_accuracy, NodeRef, Tape};
pub use model::{batch_input, BoundModel, Model, ModelConfig, ParamStore};
pub use tensor::Tensor;
