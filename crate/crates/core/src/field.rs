//! Dense row-major image planes.

use crate::error::{Error, Result};

/// `H×W` real map, e.g. a boundary map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(height: usize, width: usize) -> Self {
        ScalarField { height, width, values: vec![0.0; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "{height}x{width} field needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(ScalarField { height, width, values })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    /// Pixels with value `>= threshold`.
    pub fn binarize(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v >= threshold).collect()
    }
}

/// `H×W×k` map, channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorField {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl ColorField {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ColorField { height, width, channels, values: vec![0.0; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "{height}x{width}x{channels} field needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        Ok(ColorField { height, width, channels, values })
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.values[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.values[i..i + self.channels]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ColorField {
        ColorField { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Copies the `size×size` window whose top-left pixel is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, size: usize) -> ColorField {
        let k = self.channels;
        let mut values = Vec::with_capacity(size * size * k);
        for r in row..row + size {
            let start = (r * self.width + col) * k;
            values.extend_from_slice(&self.values[start..start + size * k]);
        }
        ColorField { height: size, width: size, channels: k, values }
    }

    /// Per-channel mean over all pixels.
    pub fn mean_color(&self) -> Vec<f64> {
        let k = self.channels;
        let mut acc = vec![0.0; k];
        for px in self.values.chunks_exact(k) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        let n = (self.height * self.width).max(1) as f64;
        acc.iter().map(|a| a / n).collect()
    }

    /// Value at quantile `q` over all entries.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return 0.0;
        }
        let idx = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
        v[idx]
    }
}
