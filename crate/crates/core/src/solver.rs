//! Per-patch junction fitting by multi-restart gradient descent.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::{estimate_wedge_colors, smooth::soft_reconstruction, wedge_labels, JunctionParams};
use crate::foj::canonical_angles;
use crate::grid::{extract_patches, local_coords, PatchGridSpec};
use crate::noise::derive_seed;
use crate::reconstruct::{PhotonInput, Reconstruction};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub restarts: usize,
    /// Iterations per restart, split evenly over the smoothing stages.
    pub iterations: usize,
    /// Initial line-search step in normalized units (pixels or radians).
    pub step: f64,
    /// Wedge smoothing anneals geometrically from the first to the second value.
    pub eps_schedule: (f64, f64),
    pub stages: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { restarts: 4, iterations: 120, step: 0.3, eps_schedule: (0.5, 0.05), stages: 4, seed: 0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.iterations == 0 || self.stages == 0 {
            return Err(Error::InvalidParameter("restarts, iterations and stages must be at least 1".into()));
        }
        let (a, b) = self.eps_schedule;
        if !(a > 0.0 && b > 0.0 && self.step > 0.0) {
            return Err(Error::InvalidParameter("step and smoothing widths must be positive".into()));
        }
        Ok(())
    }

    /// Smoothing width of each stage.
    pub fn eps_stages(&self) -> Vec<f64> {
        let (a, b) = self.eps_schedule;
        if self.stages == 1 {
            return vec![b];
        }
        (0..self.stages).map(|s| a * (b / a).powf(s as f64 / (self.stages - 1) as f64)).collect()
    }
}

/// Objective values of one restart, one list per smoothing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub stages: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PatchFit {
    /// Colors are wedge means of the fitted patch.
    pub params: JunctionParams,
    /// Mean squared error of the hard render against the patch.
    pub objective: f64,
    pub traces: Vec<RestartTrace>,
}

/// Mean squared error between a patch and its piecewise-constant
/// reconstruction with wedge-mean colors.
pub fn reconstruction_error(patch: &ColorField, vertex: (f64, f64), angles: [f64; 3]) -> Result<f64> {
    let colors = estimate_wedge_colors(patch, vertex, angles)?;
    let labels = wedge_labels(vertex, angles, patch.height);
    let k = patch.channels;
    let mut sum = 0.0;
    for (px, &j) in patch.values.chunks_exact(k).zip(&labels) {
        for (v, c) in px.iter().zip(&colors[j as usize]) {
            sum += (v - c) * (v - c);
        }
    }
    Ok(sum / patch.values.len() as f64)
}

/// Smooth reconstruction objective and its gradient w.r.t. `raw`.
pub fn smooth_objective(raw: [f64; 5], patch: &ColorField, eps_delta: f64) -> (f64, [f64; 5]) {
    soft_reconstruction(raw, &patch.values, &patch.values, patch.height, patch.channels, eps_delta)
}

/// Start from the dominant gradient orientation: a straight edge through the
/// gradient-energy centroid with a perpendicular third ray.
fn structure_tensor_start(patch: &ColorField) -> [f64; 5] {
    let r = patch.height;
    let k = patch.channels;
    let lum = |row: usize, col: usize| patch.pixel(row, col).iter().sum::<f64>() / k as f64;
    let (mut jxx, mut jxy, mut jyy, mut e, mut cx, mut cy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for row in 1..r.saturating_sub(1) {
        for col in 1..r - 1 {
            let gx = 0.5 * (lum(row, col + 1) - lum(row, col - 1));
            let gy = 0.5 * (lum(row + 1, col) - lum(row - 1, col));
            jxx += gx * gx;
            jxy += gx * gy;
            jyy += gy * gy;
            let m = gx * gx + gy * gy;
            let (x, y) = local_coords(r, row, col);
            e += m;
            cx += m * x;
            cy += m * y;
        }
    }
    if e <= 1e-15 {
        return [0.0, 0.0, 0.0, TAU / 3.0, 2.0 * TAU / 3.0];
    }
    let grad_dir = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
    let edge = grad_dir + PI / 2.0;
    [cx / e, cy / e, edge, edge + PI, edge + 1.5 * PI]
}

fn random_start(rng: &mut ChaCha8Rng, r: usize) -> [f64; 5] {
    let j = r as f64 / 4.0;
    [
        rng.random_range(-j..=j),
        rng.random_range(-j..=j),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    ]
}

// Preconditioned descent with Armijo backtracking; every accepted step
// lowers the objective, rejected steps leave the iterate unchanged.
fn descend(raw: &mut [f64; 5], patch: &ColorField, eps: f64, iterations: usize, step: f64) -> Vec<f64> {
    let (mut f, mut g) = smooth_objective(*raw, patch, eps);
    let mut trace = vec![f];
    let mut v = [0.0; 5];
    let mut t = step;
    for it in 0..iterations {
        for i in 0..5 {
            v[i] = if it == 0 { g[i] * g[i] } else { 0.9 * v[i] + 0.1 * g[i] * g[i] };
        }
        let d: [f64; 5] = std::array::from_fn(|i| -g[i] / (v[i].sqrt() + 1e-12));
        let slope: f64 = (0..5).map(|i| g[i] * d[i]).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut accepted = false;
        for _ in 0..20 {
            let cand: [f64; 5] = std::array::from_fn(|i| raw[i] + t * d[i]);
            let (fc, gc) = smooth_objective(cand, patch, eps);
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                *raw = cand;
                f = fc;
                g = gc;
                accepted = true;
                t = (t * 1.5).min(4.0 * step);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
    }
    trace
}

/// Best-of-restarts fit of a junction to a normalized patch.
pub fn fit_patch(patch: &ColorField, config: &SolverConfig) -> Result<PatchFit> {
    config.validate()?;
    let r = patch.height;
    if r < 5 || patch.width != r {
        return Err(Error::InvalidInput(format!("patch must be square with side at least 5, got {}x{}", r, patch.width)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eps = config.eps_stages();
    let per_stage = config.iterations.div_ceil(config.stages);
    let mut best: Option<(f64, (f64, f64), [f64; 3])> = None;
    let mut traces = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut raw = if restart == 0 { structure_tensor_start(patch) } else { random_start(&mut rng, r) };
        let mut stages = Vec::with_capacity(eps.len());
        for &e in &eps {
            stages.push(descend(&mut raw, patch, e, per_stage, config.step));
        }
        traces.push(RestartTrace { stages });
        let (angles, _) = canonical_angles([raw[2], raw[3], raw[4]]);
        let vertex = (raw[0], raw[1]);
        let obj = reconstruction_error(patch, vertex, angles)?;
        if best.as_ref().map_or(true, |b| obj < b.0) {
            best = Some((obj, vertex, angles));
        }
    }
    let (objective, vertex, angles) = best.expect("at least one restart");
    let colors = estimate_wedge_colors(patch, vertex, angles)?;
    Ok(PatchFit { params: JunctionParams { vertex, angles, colors }, objective, traces })
}

/// Fits every patch of an image independently and assembles global maps.
/// Patch `i` uses a seed derived from `config.seed` and `i`.
pub fn fit_image(input: &PhotonInput, grid: &PatchGridSpec, config: &SolverConfig, boundary_eps: f64) -> Result<Reconstruction> {
    config.validate()?;
    let scale = input.scale();
    let t0 = Instant::now();
    let patches = extract_patches(&input.image, grid)?;
    let extract_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let mut params = Vec::with_capacity(patches.len());
    for (i, p) in patches.iter().enumerate() {
        let normalized = p.data.map(|v| v / scale);
        let cfg = SolverConfig { seed: derive_seed(config.seed, i as u64), ..config.clone() };
        let fit = fit_patch(&normalized, &cfg)?;
        let colors = fit.params.colors.clone().map(|c| c.into_iter().map(|v| v * scale).collect());
        params.push(fit.params.with_colors(colors));
    }
    let fit_ms = t1.elapsed().as_secs_f64() * 1e3;
    let t2 = Instant::now();
    let mut rec = Reconstruction::assemble(*grid, params, scale, boundary_eps)?;
    let aggregate_ms = t2.elapsed().as_secs_f64() * 1e3;
    rec.timings = vec![("extract".into(), extract_ms), ("fit".into(), fit_ms), ("aggregate".into(), aggregate_ms)];
    Ok(rec)
}
