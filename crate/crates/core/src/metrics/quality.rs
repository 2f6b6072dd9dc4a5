//! Color-map quality scores.

use crate::error::{require_positive, Error, Result};
use crate::field::ColorField;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorQuality {
    pub ssim: f64,
    /// Decibels; `+∞` for identical images.
    pub psnr: f64,
    pub mse: f64,
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

// Separable filtering restricted to windows fully inside the image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..n).map(|t| taps[t] * img[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|t| taps[t] * tmp[(r + t) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

fn ssim_channel(x: &[f64], y: &[f64], h: usize, w: usize, peak: f64) -> f64 {
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let taps = gaussian_window(size, SSIM_SIGMA);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let (mx, oh, ow) = filter_valid(x, h, w, &taps);
    let (my, ..) = filter_valid(y, h, w, &taps);
    let (sxx, ..) = filter_valid(&prod(x, x), h, w, &taps);
    let (syy, ..) = filter_valid(&prod(y, y), h, w, &taps);
    let (sxy, ..) = filter_valid(&prod(x, y), h, w, &taps);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / (oh * ow) as f64
}

/// SSIM (11×11 Gaussian window, σ = 1.5, valid region, mean over channels),
/// PSNR against `peak` and MSE.
pub fn color_map_quality(pred: &ColorField, truth: &ColorField, peak: f64) -> Result<ColorQuality> {
    require_positive("peak", peak)?;
    if (pred.height, pred.width, pred.channels) != (truth.height, truth.width, truth.channels) {
        return Err(Error::InvalidInput(format!(
            "color maps differ in shape: {}x{}x{} vs {}x{}x{}",
            pred.height, pred.width, pred.channels, truth.height, truth.width, truth.channels
        )));
    }
    if pred.values.is_empty() {
        return Err(Error::InvalidInput("color maps are empty".into()));
    }
    let mse = pred.values.iter().zip(&truth.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.values.len() as f64;
    let psnr = if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() };
    let (h, w, k) = (pred.height, pred.width, pred.channels);
    let plane = |f: &ColorField, ch: usize| f.values.iter().skip(ch).step_by(k).copied().collect::<Vec<_>>();
    let ssim = (0..k).map(|ch| ssim_channel(&plane(pred, ch), &plane(truth, ch), h, w, peak)).sum::<f64>() / k as f64;
    Ok(ColorQuality { ssim, psnr, mse })
}
