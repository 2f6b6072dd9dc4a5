//! Minimal dense tensor engine with reverse-mode differentiation.
//!
//! Provides the layers a small convolutional network and a transformer
//! encoder need: 2D convolution, max pooling, dense layers, ReLU, layer
//! normalization, softmax, multi-head self-attention, Adam, sinusoidal 2D
//! positional encodings and a plain checkpoint format. Everything runs on
//! the CPU in `f32`; the same code is generic over `f64` for gradient checks.

pub mod checkpoint;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod posenc;
mod tensor;

pub use checkpoint::Checkpoint;
pub use element::Element;
pub use error::{Result, TensorError};
pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
pub use nn::{Conv2d, Encoder, EncoderLayer, LayerNorm, Linear, Module, MultiHeadAttention};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use posenc::{positional_encoding_2d, positional_grid};
pub use tensor::Tensor;
