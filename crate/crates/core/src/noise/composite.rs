//! Piecewise-constant scenes of overlapping shapes with exact boundary masks.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_alpha_range, derive_seed, poisson_noise, sample_range, PhotonImage};
use crate::error::{Error, Result};
use crate::field::ColorField;

/// A filled shape in image coordinates (`x` = column, `y` = row, pixel centers at integers).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Convex polygon, vertices in either winding order.
    Polygon(Vec<(f64, f64)>),
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, theta: f64 },
}

impl Shape {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Shape::Polygon(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Polygon(pts) => {
                let n = pts.len();
                let mut sign = 0.0f64;
                for i in 0..n {
                    let (ax, ay) = pts[i];
                    let (bx, by) = pts[(i + 1) % n];
                    let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                    if cross == 0.0 {
                        continue;
                    }
                    if sign == 0.0 {
                        sign = cross.signum();
                    } else if cross.signum() != sign {
                        return false;
                    }
                }
                true
            }
            Shape::Ellipse { cx, cy, rx, ry, theta } => {
                let (s, c) = theta.sin_cos();
                let dx = x - cx;
                let dy = y - cy;
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
        }
    }
}

/// Background plus shapes painted in order; later shapes cover earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub background: Vec<f64>,
    pub layers: Vec<(Shape, Vec<f64>)>,
}

impl Scene {
    /// Layer index per pixel, 0 for background and `i+1` for layer `i`.
    pub fn labels(&self) -> Vec<u16> {
        let mut out = vec![0u16; self.height * self.width];
        for (i, (shape, _)) in self.layers.iter().enumerate() {
            for r in 0..self.height {
                for c in 0..self.width {
                    if shape.contains(c as f64, r as f64) {
                        out[r * self.width + c] = i as u16 + 1;
                    }
                }
            }
        }
        out
    }

    pub fn render(&self) -> ColorField {
        let k = self.background.len();
        let labels = self.labels();
        let mut values = Vec::with_capacity(labels.len() * k);
        for &l in &labels {
            let color = if l == 0 { &self.background } else { &self.layers[l as usize - 1].1 };
            values.extend_from_slice(color);
        }
        ColorField { height: self.height, width: self.width, channels: k, values }
    }

    /// One-pixel-wide boundary: pixels of the upper region that touch a
    /// different region through a 4-neighbor.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let labels = self.labels();
        let (h, w) = (self.height, self.width);
        let mut mask = vec![false; h * w];
        for r in 0..h {
            for c in 0..w {
                let l = labels[r * w + c];
                mask[r * w + c] = neighbors4(r, c, h, w).any(|(nr, nc)| labels[nr * w + nc] < l);
            }
        }
        mask
    }
}

fn neighbors4(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [
        (r.wrapping_sub(1), c),
        (r + 1, c),
        (r, c.wrapping_sub(1)),
        (r, c + 1),
    ];
    cand.into_iter().filter(move |&(a, b)| a < h && b < w)
}

/// Largest color jump from each pixel to a 4-neighbor of a different value.
pub fn local_contrast(clean: &ColorField) -> Vec<f64> {
    let (h, w) = (clean.height, clean.width);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let p = clean.pixel(r, c);
            out[r * w + c] = neighbors4(r, c, h, w)
                .map(|(nr, nc)| {
                    clean.pixel(nr, nc).iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .fold(0.0, f64::max);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConfig {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Inclusive range of the number of shapes per image.
    pub shapes: (usize, usize),
    /// Radius range of shapes, pixels.
    pub size_range: (f64, f64),
    /// Minimum color distance between a new shape and every color already used.
    pub min_contrast: f64,
    pub alpha_range: (f64, f64),
    pub seed: u64,
}

impl CompositeConfig {
    pub fn new(count: usize, height: usize, width: usize, seed: u64) -> Self {
        CompositeConfig {
            count,
            height,
            width,
            channels: 1,
            shapes: (2, 4),
            size_range: (14.0, 45.0),
            min_contrast: 0.15,
            alpha_range: (2.0, 10.0),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter("count, image size and channels must be at least 1".into()));
        }
        if self.shapes.0 > self.shapes.1 {
            return Err(Error::InvalidParameter(format!("shape count range {:?} is inverted", self.shapes)));
        }
        if !(0.0 < self.size_range.0 && self.size_range.0 <= self.size_range.1) {
            return Err(Error::InvalidParameter(format!("size range {:?} is invalid", self.size_range)));
        }
        if !(0.0..=0.5).contains(&self.min_contrast) {
            return Err(Error::InvalidParameter("minimum contrast must lie in [0, 0.5]".into()));
        }
        check_alpha_range(self.alpha_range)
    }
}

#[derive(Debug, Clone)]
pub struct CompositeSample {
    pub scene: Scene,
    pub clean: ColorField,
    pub noisy: PhotonImage,
    pub mask: Vec<bool>,
    /// Local clean-image contrast at each boundary pixel, 0 elsewhere.
    pub contrast: Vec<f64>,
    pub seed: u64,
}

impl CompositeSample {
    /// Boundary pixels whose contrast is at least `threshold`.
    pub fn mask_at(&self, threshold: f64) -> Vec<bool> {
        self.mask.iter().zip(&self.contrast).map(|(&m, &c)| m && c >= threshold).collect()
    }
}

fn random_color<R: Rng>(rng: &mut R, k: usize, used: &[Vec<f64>], min_contrast: f64) -> Vec<f64> {
    let mut best = Vec::new();
    let mut best_gap = -1.0;
    for _ in 0..64 {
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let gap = used
            .iter()
            .map(|u| u.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        if gap >= min_contrast {
            return c;
        }
        if gap > best_gap {
            best_gap = gap;
            best = c;
        }
    }
    best
}

fn random_shape<R: Rng>(rng: &mut R, h: usize, w: usize, size: (f64, f64)) -> Shape {
    let cx = rng.random_range(0.0..w as f64);
    let cy = rng.random_range(0.0..h as f64);
    let rad = sample_range(rng, size);
    match rng.random_range(0..4) {
        0 => {
            let aspect = rng.random_range(0.5..=1.5);
            Shape::rect(cx - rad, cy - rad * aspect, cx + rad, cy + rad * aspect)
        }
        1 => Shape::Ellipse {
            cx,
            cy,
            rx: rad,
            ry: rad * rng.random_range(0.5..=1.0),
            theta: rng.random_range(0.0..TAU),
        },
        kind => {
            // Triangle or a convex polygon with up to six corners.
            let n = if kind == 2 { 3 } else { rng.random_range(4..=6) };
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
            angles.sort_by(f64::total_cmp);
            Shape::Polygon(angles.iter().map(|a| (cx + rad * a.cos(), cy + rad * a.sin())).collect())
        }
    }
}

pub fn gen_composite_sample(config: &CompositeConfig, seed: u64) -> CompositeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.channels;
    let background = random_color(&mut rng, k, &[], 0.0);
    let mut used = vec![background.clone()];
    let n = rng.random_range(config.shapes.0..=config.shapes.1);
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let shape = random_shape(&mut rng, config.height, config.width, config.size_range);
        let color = random_color(&mut rng, k, &used, config.min_contrast);
        used.push(color.clone());
        layers.push((shape, color));
    }
    let alpha = sample_range(&mut rng, config.alpha_range);
    let noise_seed = rng.random();
    let scene = Scene { height: config.height, width: config.width, background, layers };
    let clean = scene.render();
    let mask = scene.boundary_mask();
    let contrast_all = local_contrast(&clean);
    let contrast = mask.iter().zip(&contrast_all).map(|(&m, &c)| if m { c } else { 0.0 }).collect();
    let noisy = poisson_noise(&clean, alpha, noise_seed).expect("clean values within [0, 1]");
    CompositeSample { scene, clean, noisy, mask, contrast, seed }
}

/// Noisy images of overlapping polygons and ellipses with their boundary masks.
pub fn gen_composite_images(config: &CompositeConfig) -> Result<Vec<CompositeSample>> {
    config.validate()?;
    Ok((0..config.count)
        .map(|i| gen_composite_sample(config, derive_seed(config.seed, i as u64)))
        .collect())
}
