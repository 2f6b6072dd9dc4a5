//! Field-of-junctions representation: one vertex, three edge rays and three
//! wedge colors per patch.

mod aggregate;
mod geometry;
mod render;
pub mod smooth;

use std::f64::consts::TAU;

pub use aggregate::{aggregate_boundary, aggregate_color, Coverage};
pub use geometry::{
    boundary_intensity, canonical_angles, ray_distance, smooth_heaviside, wrap_angle, wrap_difference, WedgeFrame,
};
pub use render::{
    estimate_wedge_colors, render_patch_boundary, render_patch_boundary_edges, render_patch_color, wedge_index,
    wedge_labels,
};
pub use smooth::smooth_wedge_weights;

use crate::error::{Error, Result};

/// Smoothing width of the rendered boundary profile, in pixels.
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Smoothing width of the differentiable wedge indicator, in pixels.
pub const DEFAULT_WEDGE_EPSILON: f64 = 0.05;

/// Parameters of one junction in patch-local pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionParams {
    pub vertex: (f64, f64),
    /// Edge directions, sorted ascending in `[0, 2π)`.
    pub angles: [f64; 3],
    /// `colors[j]` fills the wedge from edge `j` to edge `j+1`.
    pub colors: [Vec<f64>; 3],
}

impl JunctionParams {
    /// Builds parameters from already canonical angles.
    pub fn new(vertex: (f64, f64), angles: [f64; 3], colors: [Vec<f64>; 3]) -> Result<Self> {
        let p = JunctionParams { vertex, angles, colors };
        p.validate()?;
        Ok(p)
    }

    /// Wraps and sorts `angles`; colors are taken in the resulting wedge order.
    pub fn from_raw(vertex: (f64, f64), angles: [f64; 3], colors: [Vec<f64>; 3]) -> Result<Self> {
        let (sorted, _) = canonical_angles(angles);
        Self::new(vertex, sorted, colors)
    }

    /// Geometry only; every wedge color is zero with `channels` entries.
    pub fn geometry(vertex: (f64, f64), angles: [f64; 3], channels: usize) -> Self {
        let (sorted, _) = canonical_angles(angles);
        JunctionParams {
            vertex,
            angles: sorted,
            colors: [vec![0.0; channels], vec![0.0; channels], vec![0.0; channels]],
        }
    }

    pub fn channels(&self) -> usize {
        self.colors[0].len()
    }

    pub fn frame(&self) -> WedgeFrame {
        WedgeFrame::new(self.vertex, self.angles)
    }

    pub fn with_colors(mut self, colors: [Vec<f64>; 3]) -> Self {
        self.colors = colors;
        self
    }

    /// Vertex and angles as the flat 5-vector `(x0, y0, φ1, φ2, φ3)`.
    pub fn geometry_vector(&self) -> [f64; 5] {
        [self.vertex.0, self.vertex.1, self.angles[0], self.angles[1], self.angles[2]]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vertex.0.is_finite() && self.vertex.1.is_finite()) {
            return Err(Error::InvalidParameter(format!("vertex {:?} is not finite", self.vertex)));
        }
        let a = self.angles;
        if a.iter().any(|v| !(0.0..TAU).contains(v)) || a[0] > a[1] || a[1] > a[2] {
            return Err(Error::InvalidParameter(format!("angles {a:?} must be sorted in [0, 2π)")));
        }
        let k = self.colors[0].len();
        if k == 0 || self.colors.iter().any(|c| c.len() != k || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("three finite colors of equal length required".into()));
        }
        Ok(())
    }
}
