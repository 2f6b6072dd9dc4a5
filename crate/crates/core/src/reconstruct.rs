//! Whole-image outputs shared by the learned pipeline and the direct solver.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{ColorField, ScalarField};
use crate::foj::{aggregate_boundary, aggregate_color, render_patch_boundary, Coverage, JunctionParams};
use crate::grid::PatchGridSpec;
use crate::noise::PhotonImage;

/// An input image and the intensity that corresponds to a unit-brightness pixel.
#[derive(Debug, Clone)]
pub struct PhotonInput {
    pub image: ColorField,
    /// Photon level when known; otherwise the 99th percentile sets the scale.
    pub alpha: Option<f64>,
}

impl PhotonInput {
    pub fn new(image: ColorField, alpha: Option<f64>) -> Self {
        PhotonInput { image, alpha }
    }

    pub fn scale(&self) -> f64 {
        match self.alpha {
            Some(a) if a > 0.0 => a,
            _ => {
                let q = self.image.quantile(0.99);
                if q > 0.0 {
                    q
                } else {
                    1.0
                }
            }
        }
    }
}

impl From<&PhotonImage> for PhotonInput {
    fn from(p: &PhotonImage) -> Self {
        PhotonInput { image: p.to_field(), alpha: Some(p.alpha) }
    }
}

/// Result of reconstructing one image.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: PatchGridSpec,
    /// Row-major per-patch junctions; colors in input units.
    pub params: Vec<JunctionParams>,
    pub boundary: ScalarField,
    /// Color map divided by the input scale.
    pub color: ColorField,
    pub coverage: Coverage,
    pub scale: f64,
    /// Wall time per phase, milliseconds.
    pub timings: Vec<(String, f64)>,
}

impl Reconstruction {
    /// Renders and averages the per-patch junctions into global maps.
    pub fn assemble(grid: PatchGridSpec, params: Vec<JunctionParams>, scale: f64, boundary_eps: f64) -> Result<Self> {
        let maps = params
            .iter()
            .map(|p| render_patch_boundary(p, grid.patch_size, boundary_eps))
            .collect::<Result<Vec<_>>>()?;
        let (boundary, coverage) = aggregate_boundary(&maps, &grid)?;
        let (color, _) = aggregate_color(&params, &grid)?;
        Ok(Reconstruction { grid, params, boundary, color: color.map(|v| v / scale), coverage, scale, timings: Vec::new() })
    }

    pub fn total_ms(&self) -> f64 {
        self.timings.iter().map(|(_, t)| t).sum()
    }

    pub fn timing_line(&self) -> String {
        let mut s = String::from("timing");
        for (name, ms) in &self.timings {
            let _ = write!(s, " {name}_ms={ms:.3}");
        }
        let _ = write!(s, " total_ms={:.3}", self.total_ms());
        s
    }
}

/// Text form of a params grid: a header, then one line per patch with
/// `m n x0 y0 phi1 phi2 phi3 c...` (wedge colors in order, channels innermost).
pub fn format_params_grid(grid: &PatchGridSpec, params: &[JunctionParams], scale: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# grid height={} width={} patch={} stride={} channels={} scale={}",
        grid.image_height, grid.image_width, grid.patch_size, grid.stride, grid.channels, scale
    );
    let _ = writeln!(out, "# m n x0 y0 phi1 phi2 phi3 colors");
    for (i, p) in params.iter().enumerate() {
        let (m, n) = grid.index(i);
        let _ = write!(out, "{m} {n} {} {} {} {} {}", p.vertex.0, p.vertex.1, p.angles[0], p.angles[1], p.angles[2]);
        for c in p.colors.iter().flatten() {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    out
}

/// Parses [`format_params_grid`] output.
pub fn parse_params_grid(text: &str) -> Result<(PatchGridSpec, Vec<JunctionParams>, f64)> {
    let bad = |msg: String| Error::InvalidInput(format!("params grid: {msg}"));
    let header = text.lines().next().ok_or_else(|| bad("empty file".into()))?;
    let fields: Vec<(&str, &str)> = header
        .strip_prefix("# grid ")
        .ok_or_else(|| bad("missing grid header".into()))?
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let get = |key: &str| -> Result<f64> {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| bad(format!("header lacks {key}")))
    };
    let grid = PatchGridSpec::new(
        get("height")? as usize,
        get("width")? as usize,
        get("patch")? as usize,
        get("stride")? as usize,
        get("channels")? as usize,
    )?;
    let scale = get("scale")?;
    let k = grid.channels;
    let mut params = Vec::with_capacity(grid.count());
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty()) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {t:?}", ln + 1))))
            .collect::<Result<_>>()?;
        if vals.len() != 7 + 3 * k {
            return Err(bad(format!("line {}: expected {} values, found {}", ln + 1, 7 + 3 * k, vals.len())));
        }
        if grid.index(params.len()) != (vals[0] as usize, vals[1] as usize) {
            return Err(bad(format!("line {}: patches out of row-major order", ln + 1)));
        }
        let colors = [0, 1, 2].map(|j| vals[7 + j * k..7 + (j + 1) * k].to_vec());
        params.push(JunctionParams::new((vals[2], vals[3]), [vals[4], vals[5], vals[6]], colors)?);
    }
    if params.len() != grid.count() {
        return Err(bad(format!("expected {} patches, found {}", grid.count(), params.len())));
    }
    Ok((grid, params, scale))
}
