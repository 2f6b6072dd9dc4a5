//! Averaging overlapping per-patch maps into global maps.

use crate::error::{Error, Result};
use crate::field::{ColorField, ScalarField};
use crate::grid::PatchGridSpec;

use super::render::render_patch_color;
use super::JunctionParams;

/// Number of patches that contributed to each pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coverage {
    pub width: usize,
    pub counts: Vec<u32>,
}

impl Coverage {
    pub fn is_covered(&self, row: usize, col: usize) -> bool {
        self.counts[row * self.width + col] > 0
    }

    pub fn uncovered(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }
}

fn check_len(len: usize, grid: &PatchGridSpec) -> Result<()> {
    if len != grid.count() {
        return Err(Error::InvalidInput(format!("expected {} patches for the grid, got {len}", grid.count())));
    }
    Ok(())
}

/// Mean of the per-patch boundary maps over the patches covering each pixel.
/// Pixels covered by no patch are 0 and flagged in the returned coverage.
pub fn aggregate_boundary(per_patch: &[ScalarField], grid: &PatchGridSpec) -> Result<(ScalarField, Coverage)> {
    check_len(per_patch.len(), grid)?;
    let r = grid.patch_size;
    let w = grid.image_width;
    let mut acc = ScalarField::zeros(grid.image_height, w);
    let counts = grid.cover_counts();
    for (i, field) in per_patch.iter().enumerate() {
        if field.height != r || field.width != r {
            return Err(Error::InvalidInput(format!(
                "patch {i} map is {}x{}, expected {r}x{r}",
                field.height, field.width
            )));
        }
        let (m, n) = grid.index(i);
        let (r0, c0) = grid.origin(m, n);
        for row in 0..r {
            let dst = &mut acc.values[(r0 + row) * w + c0..(r0 + row) * w + c0 + r];
            for (d, s) in dst.iter_mut().zip(&field.values[row * r..(row + 1) * r]) {
                *d += s;
            }
        }
    }
    for (v, &c) in acc.values.iter_mut().zip(&counts) {
        *v = if c > 0 { *v / c as f64 } else { 0.0 };
    }
    Ok((acc, Coverage { width: w, counts }))
}

/// Mean over covering patches of the color each patch assigns to the pixel.
pub fn aggregate_color(params: &[JunctionParams], grid: &PatchGridSpec) -> Result<(ColorField, Coverage)> {
    check_len(params.len(), grid)?;
    let r = grid.patch_size;
    let k = grid.channels;
    let w = grid.image_width;
    let mut acc = ColorField::zeros(grid.image_height, w, k);
    let counts = grid.cover_counts();
    for (i, p) in params.iter().enumerate() {
        if p.channels() != k {
            return Err(Error::InvalidInput(format!("patch {i} has {} channels, grid has {k}", p.channels())));
        }
        let local = render_patch_color(p, r);
        let (m, n) = grid.index(i);
        let (r0, c0) = grid.origin(m, n);
        for row in 0..r {
            let start = ((r0 + row) * w + c0) * k;
            let dst = &mut acc.values[start..start + r * k];
            for (d, s) in dst.iter_mut().zip(&local.values[row * r * k..(row + 1) * r * k]) {
                *d += s;
            }
        }
    }
    for (px, &c) in acc.values.chunks_exact_mut(k).zip(&counts) {
        for v in px {
            *v = if c > 0 { *v / c as f64 } else { 0.0 };
        }
    }
    Ok((acc, Coverage { width: w, counts }))
}
