//! Differentiable tensor operations, implemented as inherent methods on
//! [`Tensor`](crate::Tensor).

mod basic;
mod conv;
mod linear;
mod norm;

pub use conv::window_output_size;
