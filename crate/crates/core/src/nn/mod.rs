//! Small deterministic neural-network engine with hand-derived gradients.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use layers::{conv1d_forward, maxpool1d, LayerSpec, Shape};
pub use loss::{softmax, softmax_xent};
pub use network::{BatchLoss, Example, HeadSpec, HeadTarget, Network, NetworkSpec, Workspace};
pub use tensor::Tensor;
pub use train::{fit, EpochStats, TrainConfig};
