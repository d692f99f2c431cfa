//! Dense tensors, reverse-mode gradients, layers, Adam and training.

pub mod gradcheck;
mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use gradcheck::{grad_check, grad_check_model};
pub use kernels::{conv_output_len, pool_output_len};
pub use layers::{
    conv1d_forward, dense_forward, elu, maxpool1d, mse_loss, relu, sigmoid, softmax, tanh,
    layer_norm_forward, Conv1dLayerParams, Conv1dVars, DenseLayerParams, DenseVars, LayerNormParams,
    LayerNormVars,
};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use params::{NamedParameters, NamedTensor, ParamDoc};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use train::{evaluate_loss, fit, TrainConfig, Trainable};
