//! Dense linear algebra, small differentiable networks, losses and the
//! optimizer everything else is built on.

pub mod funcs;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod svd;

pub use funcs::{argmax, cross_entropy, kl_div, softmax_norm};
pub use matrix::Matrix;
pub use mlp::{Activation, Layer, Mlp, MlpGrads, Tape};
pub use optim::Adam;
pub use svd::{pinv, svd, Svd, DEFAULT_PINV_TOL};
