//! Dense numerics, the GELU MLP with reverse-mode gradients, and Adam.

pub mod activation;
pub mod adam;
pub mod loss;
pub mod matrix;
pub mod mlp;

pub use activation::{gelu, gelu_derivative, Activation};
pub use adam::{AdamConfig, AdamState};
pub use loss::mse;
pub use matrix::{dot, Matrix};
pub use mlp::{Dense, MlpGrads, MlpParams, MlpTape};
