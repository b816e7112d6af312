//! Semi-tied units (STUs) for LSTM and highway layers.
//!
//! An STU layer computes one shared affine map `e = Wx + Uh + b` and feeds
//! it to every gate and candidate through per-node parametric activations
//! `eta * f(gamma * a)`. The crate provides the layer families, exact
//! gradients, truncated-BPTT training, synthetic tasks and the `stu` CLI.

pub mod activations;
pub mod cli;
pub mod config;
pub mod error;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use model::{Model, Sequence};
pub use rng::Rng;
pub use tensor::Tensor;
