//! Boundary and color-map evaluation.

mod distance;
mod quality;
mod report;

pub use distance::{chamfer_distance, edge_localization_error, mask_localization_error, squared_distance_transform, EdgeError};
pub use quality::{color_map_quality, gaussian_window, ColorQuality, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{evaluate_image, EvalReport, EvalSettings, ImageEval, DEFAULT_THRESHOLDS};

use crate::error::{require_positive, Error, Result};
use crate::field::ScalarField;
use crate::foj::{aggregate_boundary, render_patch_boundary_edges, JunctionParams};
use crate::grid::PatchGridSpec;

/// Color contrast across the three edges, divided by `alpha`.
///
/// Entry `j` compares wedges `j` and `j+1`, so it scores the edge they share,
/// which is edge `j+1` (mod 3) in the sorted order.
pub fn relative_color_difference(params: &JunctionParams, alpha: f64) -> Result<[f64; 3]> {
    require_positive("photon level", alpha)?;
    Ok([0, 1, 2].map(|j| {
        let a = &params.colors[j];
        let b = &params.colors[(j + 1) % 3];
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / alpha
    }))
}

/// Which edges survive a contrast threshold.
pub fn edges_above(params: &JunctionParams, alpha: f64, threshold: f64) -> Result<[bool; 3]> {
    let dc = relative_color_difference(params, alpha)?;
    let mut include = [false; 3];
    for j in 0..3 {
        include[(j + 1) % 3] = dc[j] >= threshold;
    }
    Ok(include)
}

/// Global boundary map drawn only from edges whose relative color difference
/// is at least `threshold`. Colors are in the units where `alpha` is the
/// unit-intensity level.
pub fn select_boundaries(
    params: &[JunctionParams],
    alpha: f64,
    threshold: f64,
    grid: &PatchGridSpec,
    boundary_eps: f64,
) -> Result<ScalarField> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold must be non-negative, got {threshold}")));
    }
    let maps = params
        .iter()
        .map(|p| render_patch_boundary_edges(p, grid.patch_size, boundary_eps, edges_above(p, alpha, threshold)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_boundary(&maps, grid)?.0)
}
