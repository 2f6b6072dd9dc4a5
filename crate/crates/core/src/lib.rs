//! Boundary estimation for photon-limited images with the field-of-junctions
//! representation.
//!
//! Every patch of an image is summarized by a junction: a vertex, three edge
//! rays and three wedge colors. A convolutional stage predicts junctions per
//! patch, a transformer stage refines all of them jointly, and overlapping
//! patch renders are averaged into global boundary and color maps.

pub mod error;
pub mod field;
pub mod foj;
pub mod grid;
pub mod imageio;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod reconstruct;
pub mod solver;

pub use error::{Error, Result};
pub use field::{ColorField, ScalarField};
pub use foj::JunctionParams;
pub use grid::{extract_patches, PatchGridSpec};
