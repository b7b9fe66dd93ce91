//! Minimal neural-network substrate: the residual 1-D CNN, reverse-mode
//! gradients for its layer set, cross-entropy, Adam, and checkpoints.

mod adam;
mod checkpoint;
pub mod layers;
mod loss;
mod model;
mod params;
mod scalar;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{ce_softmax_dlogits, cross_entropy, softmax, PROB_CLAMP};
pub use model::{
    finite_difference_check, Cache, ForwardPass, Mode, ModelConfig, Resnet1d, RunningUpdate,
};
pub use params::{Gradients, Init, Layout, ParamKind, Parameters, TensorId};
pub use scalar::Scalar;
