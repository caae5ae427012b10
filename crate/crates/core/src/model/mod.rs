//! The encoder: configuration, parameters, forward pass, training and gradient checks.

mod config;
mod forward;
mod gradcheck;
mod params;
mod train;

pub use config::ModelConfig;
pub use forward::{
    attention_forward, embed, ffn_forward, forward_sequence, model_forward, model_logits,
    AttentionTrace, ForwardTrace, LayerTrace,
};
pub use gradcheck::{grad_check, grad_check_report, GradCheckReport, GRAD_CHECK_MAX_PARAMS};
pub use params::{
    init_params, init_params_in_range, param_count, param_count_enumerated, tensor_specs, LayerParams, ParamSet,
    TensorSpec, INIT_RANGE,
};
pub use train::{
    batch_loss, cross_entropy, loss_and_gradients, synth_copy_batch, train_copy_task, train_step,
    CopyBatch, TrainRun,
};
