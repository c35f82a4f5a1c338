//! Minimal reverse-mode autodiff: dense f64 tensors plus an index-based
//! tape with the op set the latent model and raymarcher need.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_fn};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{
    logistic, ray_accumulate_backward, ray_accumulate_forward, softplus, trilinear_backward,
    trilinear_backward_into, trilinear_forward, trilinear_forward_into,
};
