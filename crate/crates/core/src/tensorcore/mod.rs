//! Dense tensors, a reverse-mode tape and the attention primitive everything else is built from.

mod attention;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use attention::{check_heads, multi_head_attention, AttentionParams, AttentionVars};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use params::{derive_seed, ParamId, ParamStore, Parameter};
pub use tape::{
    conv2d_valid_forward, stable_sigmoid, BackwardReport, Tape, Var, COSINE_NORM_FLOOR,
};
pub use tensor::Tensor;

/// Default LeakyReLU negative slope.
pub const LEAKY_SLOPE: f64 = 0.01;

#[cfg(test)]
mod tests;
