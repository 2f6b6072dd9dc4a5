//! Hard per-patch rendering and wedge color estimation.

use crate::error::{require_positive, Error, Result};
use crate::field::{ColorField, ScalarField};
use crate::grid::local_coords;

use super::geometry::{intensity_unchecked, WedgeFrame};
use super::JunctionParams;

/// Wedge of `point` (patch-local coordinates) under `params`.
pub fn wedge_index(point: (f64, f64), params: &JunctionParams) -> usize {
    params.frame().index(point.0, point.1)
}

/// Wedge index of every pixel of an `r×r` patch, row-major.
pub fn wedge_labels(vertex: (f64, f64), angles: [f64; 3], r: usize) -> Vec<u8> {
    let frame = WedgeFrame::new(vertex, angles);
    let mut out = Vec::with_capacity(r * r);
    for row in 0..r {
        for col in 0..r {
            let (x, y) = local_coords(r, row, col);
            out.push(frame.index(x, y) as u8);
        }
    }
    out
}

/// Boundary map `ε²/(ε²+d²)` of the nearest edge at every pixel center.
pub fn render_patch_boundary(params: &JunctionParams, r: usize, eps: f64) -> Result<ScalarField> {
    render_patch_boundary_edges(params, r, eps, [true; 3])
}

/// Boundary map drawn from the edges flagged in `include` only.
pub fn render_patch_boundary_edges(params: &JunctionParams, r: usize, eps: f64, include: [bool; 3]) -> Result<ScalarField> {
    require_positive("epsilon", eps)?;
    let frame = params.frame();
    let mut field = ScalarField::zeros(r, r);
    if !include.iter().any(|&b| b) {
        return Ok(field);
    }
    for row in 0..r {
        for col in 0..r {
            let (x, y) = local_coords(r, row, col);
            field.set(row, col, intensity_unchecked(frame.min_ray_distance(x, y, include), eps));
        }
    }
    Ok(field)
}

/// Piecewise-constant color map: each pixel takes its wedge's color.
pub fn render_patch_color(params: &JunctionParams, r: usize) -> ColorField {
    let k = params.channels();
    let labels = wedge_labels(params.vertex, params.angles, r);
    let mut values = Vec::with_capacity(r * r * k);
    for &j in &labels {
        values.extend_from_slice(&params.colors[j as usize]);
    }
    ColorField { height: r, width: r, channels: k, values }
}

/// Mean of the patch over each wedge; an empty wedge gets the whole-patch mean.
pub fn estimate_wedge_colors(patch: &ColorField, vertex: (f64, f64), angles: [f64; 3]) -> Result<[Vec<f64>; 3]> {
    if patch.height != patch.width {
        return Err(Error::InvalidInput(format!("patch must be square, got {}x{}", patch.height, patch.width)));
    }
    let labels = wedge_labels(vertex, angles, patch.height);
    Ok(colors_from_labels(patch, &labels))
}

pub(crate) fn colors_from_labels(patch: &ColorField, labels: &[u8]) -> [Vec<f64>; 3] {
    let k = patch.channels;
    let mut sums = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    let mut counts = [0usize; 3];
    for (px, &j) in patch.values.chunks_exact(k).zip(labels) {
        counts[j as usize] += 1;
        for (s, v) in sums[j as usize].iter_mut().zip(px) {
            *s += v;
        }
    }
    let mean = patch.mean_color();
    let mut out = sums;
    for j in 0..3 {
        if counts[j] == 0 {
            out[j] = mean.clone();
        } else {
            out[j].iter_mut().for_each(|s| *s /= counts[j] as f64);
        }
    }
    out
}
