use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_alpha_range, derive_seed, poisson_noise, sample_range, PhotonImage};
use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::{render_patch_color, wedge_labels, JunctionParams};

/// Distributions of the single-junction patch generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDatasetConfig {
    pub count: usize,
    pub patch_size: usize,
    pub channels: usize,
    /// Vertex coordinates are uniform in `[−v, v]`.
    pub vertex_range: f64,
    /// Smallest allowed circular gap between edges, radians. Zero disables the floor.
    pub min_angle_gap: f64,
    pub color_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub seed: u64,
}

impl PatchDatasetConfig {
    pub fn new(count: usize, patch_size: usize, seed: u64) -> Self {
        PatchDatasetConfig {
            count,
            patch_size,
            channels: 1,
            vertex_range: (patch_size as f64 - 1.0) / 2.0,
            min_angle_gap: 10f64.to_radians(),
            color_range: (0.0, 1.0),
            alpha_range: (2.0, 10.0),
            seed,
        }
    }

    /// Degenerate junctions allowed.
    pub fn hard(mut self) -> Self {
        self.min_angle_gap = 0.0;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 || self.patch_size == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter("count, patch size and channels must be at least 1".into()));
        }
        check_alpha_range(self.alpha_range)?;
        let (lo, hi) = self.color_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!("color range {:?} must lie in [0, 1]", self.color_range)));
        }
        if !(self.vertex_range >= 0.0 && self.vertex_range.is_finite()) {
            return Err(Error::InvalidParameter("vertex range must be finite and non-negative".into()));
        }
        if !(0.0..TAU / 3.0).contains(&self.min_angle_gap) {
            return Err(Error::InvalidParameter("minimum angle gap must lie in [0, 2π/3)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PatchSample {
    pub noisy: PhotonImage,
    pub clean: ColorField,
    pub truth: JunctionParams,
    pub seed: u64,
}

fn sample_angles<R: Rng>(rng: &mut R, min_gap: f64) -> [f64; 3] {
    loop {
        let mut a = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        a.sort_by(f64::total_cmp);
        let gaps = [a[1] - a[0], a[2] - a[1], a[0] + TAU - a[2]];
        if gaps.iter().all(|&g| g >= min_gap) {
            return a;
        }
    }
}

/// Generates one sample from its own seed.
pub fn gen_patch_sample(config: &PatchDatasetConfig, seed: u64) -> PatchSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = config.patch_size;
    let v = config.vertex_range;
    let vertex = (rng.random_range(-v..=v), rng.random_range(-v..=v));
    let angles = sample_angles(&mut rng, config.min_angle_gap);
    let mut colors: [Vec<f64>; 3] = std::array::from_fn(|_| {
        (0..config.channels).map(|_| sample_range(&mut rng, config.color_range)).collect()
    });
    let alpha = sample_range(&mut rng, config.alpha_range);
    let noise_seed = rng.random();

    // A wedge that misses every pixel center takes the patch mean, which is
    // what color estimation returns for it; the render is unaffected.
    let labels = wedge_labels(vertex, angles, r);
    let mut used = [false; 3];
    labels.iter().for_each(|&j| used[j as usize] = true);
    if used.iter().any(|u| !u) {
        let k = config.channels;
        let mut mean = vec![0.0; k];
        for &j in &labels {
            for (m, c) in mean.iter_mut().zip(&colors[j as usize]) {
                *m += c / labels.len() as f64;
            }
        }
        for j in 0..3 {
            if !used[j] {
                colors[j] = mean.clone();
            }
        }
    }
    let truth = JunctionParams { vertex, angles, colors };
    let clean = render_patch_color(&truth, r);
    let noisy = poisson_noise(&clean, alpha, noise_seed).expect("clean values within [0, 1]");
    PatchSample { noisy, clean, truth, seed }
}

/// Single-junction patches rendered from random parameters and Poisson-noised.
/// Sample `i` depends only on the master seed and `i`.
pub fn gen_patch_dataset(config: &PatchDatasetConfig) -> Result<Vec<PatchSample>> {
    config.validate()?;
    Ok((0..config.count)
        .map(|i| gen_patch_sample(config, derive_seed(config.seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honors_gap_floor() {
        let cfg = PatchDatasetConfig::new(200, 21, 1);
        for s in gen_patch_dataset(&cfg).unwrap() {
            let a = s.truth.angles;
            let gaps = [a[1] - a[0], a[2] - a[1], a[0] + TAU - a[2]];
            assert!(gaps.iter().all(|&g| g >= cfg.min_angle_gap));
            assert!((2.0..=10.0).contains(&s.noisy.alpha));
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = PatchDatasetConfig::new(5, 21, 1);
        cfg.alpha_range = (3.0, 2.0);
        assert!(gen_patch_dataset(&cfg).is_err());
        let mut cfg = PatchDatasetConfig::new(5, 21, 1);
        cfg.color_range = (0.0, 2.0);
        assert!(gen_patch_dataset(&cfg).is_err());
        assert!(gen_patch_dataset(&PatchDatasetConfig::new(0, 21, 1)).is_err());
    }

    #[test]
    fn degenerate_alpha_range_allowed() {
        let mut cfg = PatchDatasetConfig::new(3, 9, 1);
        cfg.alpha_range = (4.0, 4.0);
        assert!(gen_patch_dataset(&cfg).unwrap().iter().all(|s| s.noisy.alpha == 4.0));
    }
}
