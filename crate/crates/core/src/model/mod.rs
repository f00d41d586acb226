//! Small convolutional multi-label classifier with hand-written forward and
//! backward passes, Adam, L2 penalty and RandomErasing augmentation.

mod adam;
mod arch;
mod augment;
mod checkpoint;
mod loss;
mod network;
mod params;
mod scalar;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use arch::{ArchitectureDescriptor, BlockShape, ConvBlock};
pub use augment::{random_erasing, ErasingConfig, Rect};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::bce_l2_loss;
pub use network::{
    add_l2_grad, backward, forward, forward_sample, predict, sigmoid, target_activation_grad,
    ForwardCache, SampleCache, PROB_EPS,
};
pub use params::{BlockKind, ModelParams, ParamBlock};
pub use scalar::{matmul, Operand, Scalar};
pub use train::{evaluate_auc, train, EpochStats, TrainConfig, TrainOutcome};

/// Numeric precision the network runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}
