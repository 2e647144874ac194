//! Minimal dense f64 kernel with hand-derived gradients.
//!
//! Everything is float64 and deterministic; there is no tape. Each op
//! exposes an explicit forward returning whatever cache its backward needs,
//! and backward functions accumulate into caller-owned gradient tensors.
//! [`gradcheck`] provides the central finite-difference checker the test
//! suites use to pin every backward pass.

pub mod attention;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod pretrained;
pub mod tensor;

pub use attention::{
    attention_penalty, attention_penalty_grad, self_attention, self_attention_backward,
    AttentionOutput,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::{
    conv_relu_maxpool, conv_relu_maxpool_backward, dense_backward, dense_forward, embed_backward,
    embed_forward, softmax, softmax_ce, unit_dropout, Activation,
};
pub use params::{AdamConfig, ParamId, ParamSet, Parameter};
pub use tensor::Tensor;
