//! Overlapping patch layout over an image.

use crate::error::{Error, Result};
use crate::field::ColorField;

/// Geometry of a regular grid of square patches.
///
/// Patch `(m, n)` covers rows `[m·s, m·s+R)` and columns `[n·s, n·s+R)`.
/// Inside a patch, pixel `(r, c)` sits at local coordinates
/// `x = c − (R−1)/2`, `y = r − (R−1)/2` (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGridSpec {
    pub image_height: usize,
    pub image_width: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub channels: usize,
}

impl PatchGridSpec {
    pub fn new(image_height: usize, image_width: usize, patch_size: usize, stride: usize, channels: usize) -> Result<Self> {
        if patch_size == 0 || stride == 0 || channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "patch size ({patch_size}), stride ({stride}) and channels ({channels}) must be at least 1"
            )));
        }
        if patch_size > image_height.min(image_width) {
            return Err(Error::InvalidInput(format!(
                "patch size {patch_size} exceeds image {image_height}x{image_width}"
            )));
        }
        Ok(PatchGridSpec { image_height, image_width, patch_size, stride, channels })
    }

    pub fn rows(&self) -> usize {
        (self.image_height - self.patch_size) / self.stride + 1
    }

    pub fn cols(&self) -> usize {
        (self.image_width - self.patch_size) / self.stride + 1
    }

    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Top-left image pixel of patch `(m, n)`.
    pub fn origin(&self, m: usize, n: usize) -> (usize, usize) {
        (m * self.stride, n * self.stride)
    }

    /// `(m, n)` for the patch at row-major position `i`.
    pub fn index(&self, i: usize) -> (usize, usize) {
        (i / self.cols(), i % self.cols())
    }

    /// Offset of the patch center from a pixel index along one axis.
    pub fn half_extent(&self) -> f64 {
        (self.patch_size as f64 - 1.0) / 2.0
    }

    /// Number of patches covering each image pixel, row-major.
    pub fn cover_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.image_height * self.image_width];
        for m in 0..self.rows() {
            for n in 0..self.cols() {
                let (r0, c0) = self.origin(m, n);
                for r in r0..r0 + self.patch_size {
                    for c in c0..c0 + self.patch_size {
                        counts[r * self.image_width + c] += 1;
                    }
                }
            }
        }
        counts
    }

    pub fn check_image(&self, image: &ColorField) -> Result<()> {
        if image.height != self.image_height || image.width != self.image_width || image.channels != self.channels {
            return Err(Error::InvalidInput(format!(
                "image is {}x{}x{}, grid expects {}x{}x{}",
                image.height, image.width, image.channels, self.image_height, self.image_width, self.channels
            )));
        }
        Ok(())
    }
}

/// Local coordinates of pixel `(row, col)` in a patch of size `r`.
#[inline]
pub fn local_coords(patch_size: usize, row: usize, col: usize) -> (f64, f64) {
    let h = (patch_size as f64 - 1.0) / 2.0;
    (col as f64 - h, row as f64 - h)
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub m: usize,
    pub n: usize,
    pub data: ColorField,
}

/// Cuts `image` into the grid's patches in row-major `(m, n)` order.
pub fn extract_patches(image: &ColorField, grid: &PatchGridSpec) -> Result<Vec<Patch>> {
    grid.check_image(image)?;
    let mut out = Vec::with_capacity(grid.count());
    for m in 0..grid.rows() {
        for n in 0..grid.cols() {
            let (r0, c0) = grid.origin(m, n);
            out.push(Patch { m, n, data: image.window(r0, c0, grid.patch_size) });
        }
    }
    Ok(out)
}
