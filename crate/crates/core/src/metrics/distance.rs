//! Exact Euclidean distance transforms and boundary distance scores.

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Result of an edge localization measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeError {
    /// Mean distance in pixels, NaN when nothing was predicted.
    pub mean: f64,
    pub predicted_pixels: usize,
}

impl EdgeError {
    pub fn is_empty_prediction(&self) -> bool {
        self.predicted_pixels == 0
    }
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher); infinite
// entries contribute no parabola.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        let mut s = f64::NEG_INFINITY;
        while k >= 0 {
            let p = v[k as usize];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k as usize] {
                k -= 1;
                s = f64::NEG_INFINITY;
            } else {
                break;
            }
        }
        k += 1;
        v[k as usize] = q;
        z[k as usize] = s;
        z[k as usize + 1] = f64::INFINITY;
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let d = q as f64 - v[j] as f64;
        *o = d * d + f[v[j]];
    }
}

/// Squared distance from every pixel to the nearest set pixel of `mask`
/// (`height×width`, row-major); infinite when the mask is empty.
pub fn squared_distance_transform(mask: &[bool], height: usize, width: usize) -> Vec<f64> {
    let n = height.max(width);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut col_in = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    let mut grid = vec![0.0; height * width];
    for c in 0..width {
        for r in 0..height {
            col_in[r] = if mask[r * width + c] { 0.0 } else { f64::INFINITY };
        }
        transform_1d(&col_in, &mut col_out, &mut v, &mut z);
        for r in 0..height {
            grid[r * width + c] = col_out[r];
        }
    }
    let mut row_out = vec![0.0; width];
    for r in 0..height {
        transform_1d(&grid[r * width..(r + 1) * width], &mut row_out, &mut v, &mut z);
        grid[r * width..(r + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

/// Mean distance from each predicted pixel to the nearest truth pixel.
pub fn mask_localization_error(pred: &[bool], truth: &[bool], height: usize, width: usize) -> Result<EdgeError> {
    if pred.len() != height * width || truth.len() != height * width {
        return Err(Error::InvalidInput(format!(
            "masks of {} and {} pixels do not match {height}x{width}",
            pred.len(),
            truth.len()
        )));
    }
    if !truth.iter().any(|&t| t) {
        return Err(Error::InvalidInput("truth boundary mask is empty".into()));
    }
    let dt = squared_distance_transform(truth, height, width);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&p, &d) in pred.iter().zip(&dt) {
        if p {
            sum += d.sqrt();
            count += 1;
        }
    }
    let mean = if count == 0 { f64::NAN } else { sum / count as f64 };
    Ok(EdgeError { mean, predicted_pixels: count })
}

/// Binarizes `pred` at `threshold` and measures it against `truth`.
pub fn edge_localization_error(pred: &ScalarField, truth: &[bool], threshold: f64) -> Result<EdgeError> {
    mask_localization_error(&pred.binarize(threshold), truth, pred.height, pred.width)
}

/// Symmetric variant: average of the two directed mean distances.
pub fn chamfer_distance(a: &[bool], b: &[bool], height: usize, width: usize) -> Result<f64> {
    let ab = mask_localization_error(a, b, height, width)?;
    let ba = mask_localization_error(b, a, height, width)?;
    Ok(0.5 * (ab.mean + ba.mean))
}
