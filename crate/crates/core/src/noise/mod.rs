//! Photon-limited noise and synthetic training data.

mod composite;
mod patches;

pub use composite::{gen_composite_images, CompositeConfig, CompositeSample, Scene, Shape};
pub use patches::{gen_patch_dataset, PatchDatasetConfig, PatchSample};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{require_positive, Error, Result};
use crate::field::ColorField;

/// Photon counts of an `H×W×k` image together with its photon level.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub counts: Vec<u32>,
    pub alpha: f64,
}

impl PhotonImage {
    /// Counts as reals.
    pub fn to_field(&self) -> ColorField {
        ColorField {
            height: self.height,
            width: self.width,
            channels: self.channels,
            values: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Counts divided by the photon level.
    pub fn normalized(&self) -> ColorField {
        let a = self.alpha;
        ColorField {
            height: self.height,
            width: self.width,
            channels: self.channels,
            values: self.counts.iter().map(|&c| c as f64 / a).collect(),
        }
    }
}

/// Seed of item `index` derived from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent Poisson draw with mean `alpha·v` for every entry of `clean`.
pub fn poisson_noise(clean: &ColorField, alpha: f64, seed: u64) -> Result<PhotonImage> {
    require_positive("photon level", alpha)?;
    if let Some(v) = clean.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("clean intensities must lie in [0, 1], found {v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = clean
        .values
        .iter()
        .map(|&v| {
            let mean = alpha * v;
            if mean > 0.0 {
                let d = Poisson::new(mean).expect("positive finite mean");
                d.sample(&mut rng) as u32
            } else {
                0
            }
        })
        .collect();
    Ok(PhotonImage {
        height: clean.height,
        width: clean.width,
        channels: clean.channels,
        counts,
        alpha,
    })
}

pub(crate) fn check_alpha_range(range: (f64, f64)) -> Result<()> {
    if !(range.0 > 0.0 && range.0 <= range.1 && range.1.is_finite()) {
        return Err(Error::InvalidParameter(format!("photon level range {range:?} must satisfy 0 < lo <= hi")));
    }
    Ok(())
}

pub(crate) fn sample_range<R: rand::Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}
