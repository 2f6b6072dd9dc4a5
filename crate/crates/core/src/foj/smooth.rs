//! Differentiable relaxation of wedge membership and boundary rendering.
//!
//! Each wedge gets a score from the smoothed step of its signed margin
//! (distance inside the bounding half-planes); scores are normalized to sum
//! to one. Gradients are propagated by hand back to the raw geometry
//! `(x0, y0, φ1, φ2, φ3)` through the wrap-and-sort canonicalization.

use std::f64::consts::PI;

use crate::error::{require_positive, Result};
use crate::grid::local_coords;

use super::geometry::{canonical_angles, heaviside_unchecked, intensity_unchecked, WedgeFrame};
use super::JunctionParams;

/// Soft wedge weights at one point; they sum to 1 and sharpen to the hard
/// wedge indicator as `eps_delta → 0`.
pub fn smooth_wedge_weights(point: (f64, f64), params: &JunctionParams, eps_delta: f64) -> Result<[f64; 3]> {
    require_positive("wedge epsilon", eps_delta)?;
    let frame = params.frame();
    let dx = point.0 - frame.vertex.0;
    let dy = point.1 - frame.vertex.1;
    let h = [0, 1, 2].map(|j| heaviside_unchecked(frame.margin(j, dx, dy), eps_delta));
    let s: f64 = h.iter().sum();
    Ok(h.map(|v| v / s))
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelState {
    w: [f64; 3],
    hsum: f64,
    margin: [f64; 3],
    /// Margin `j` came from edge `j` (true) or from edge `j+1`.
    from_first: [bool; 3],
}

#[derive(Debug, Clone, Copy, Default)]
struct BoundaryState {
    value: f64,
    dist: f64,
    edge: usize,
    on_segment: bool,
}

/// Soft rendering of one `r×r` patch with its adjoint.
#[derive(Debug, Clone)]
pub struct SoftPatch {
    r: usize,
    eps_delta: f64,
    boundary_eps: f64,
    perm: [usize; 3],
    angles: [f64; 3],
    frame: WedgeFrame,
    pixels: Vec<PixelState>,
    boundary: Vec<BoundaryState>,
}

impl SoftPatch {
    /// `raw` is `(x0, y0, φ1, φ2, φ3)` with arbitrary angles. The boundary map
    /// is rendered only when `boundary_eps` is given.
    pub fn new(raw: [f64; 5], r: usize, eps_delta: f64, boundary_eps: Option<f64>) -> Self {
        let (angles, perm) = canonical_angles([raw[2], raw[3], raw[4]]);
        let frame = WedgeFrame::new((raw[0], raw[1]), angles);
        let mut pixels = Vec::with_capacity(r * r);
        let mut boundary = Vec::new();
        for row in 0..r {
            for col in 0..r {
                let (x, y) = local_coords(r, row, col);
                let dx = x - raw[0];
                let dy = y - raw[1];
                let side = [0, 1, 2].map(|j| frame.side(j, dx, dy));
                let mut st = PixelState::default();
                for j in 0..3 {
                    let a = side[j];
                    let b = -side[(j + 1) % 3];
                    let first = if frame.gaps[j] < PI { a <= b } else { a >= b };
                    st.from_first[j] = first;
                    st.margin[j] = if first { a } else { b };
                    st.w[j] = heaviside_unchecked(st.margin[j], eps_delta);
                }
                st.hsum = st.w.iter().sum();
                st.w.iter_mut().for_each(|v| *v /= st.hsum);
                pixels.push(st);
                if let Some(eps) = boundary_eps {
                    let mut best = BoundaryState { dist: f64::INFINITY, ..Default::default() };
                    for j in 0..3 {
                        let t = dx * frame.cos[j] + dy * frame.sin[j];
                        let (d, on_segment) = if t >= 0.0 { (side[j].abs(), true) } else { (dx.hypot(dy), false) };
                        if d < best.dist {
                            best = BoundaryState { value: 0.0, dist: d, edge: j, on_segment };
                        }
                    }
                    best.value = intensity_unchecked(best.dist, eps);
                    boundary.push(best);
                }
            }
        }
        SoftPatch {
            r,
            eps_delta,
            boundary_eps: boundary_eps.unwrap_or(0.0),
            perm,
            angles,
            frame,
            pixels,
            boundary,
        }
    }

    pub fn size(&self) -> usize {
        self.r
    }

    pub fn sorted_angles(&self) -> [f64; 3] {
        self.angles
    }

    /// Weight of wedge `j` at pixel `i` (row-major).
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.pixels[i].w[j]
    }

    pub fn weights(&self) -> Vec<[f64; 3]> {
        self.pixels.iter().map(|p| p.w).collect()
    }

    /// Rendered boundary map; empty unless requested at construction.
    pub fn boundary(&self) -> Vec<f64> {
        self.boundary.iter().map(|b| b.value).collect()
    }

    /// Wedge-weighted means of `patch` (`r²×k`, row-major) and the weight
    /// mass of each wedge.
    pub fn soft_colors(&self, patch: &[f64], k: usize) -> ([Vec<f64>; 3], [f64; 3]) {
        let mut colors = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
        let mut mass = [0.0; 3];
        for (st, px) in self.pixels.iter().zip(patch.chunks_exact(k)) {
            for j in 0..3 {
                mass[j] += st.w[j];
                for (c, v) in colors[j].iter_mut().zip(px) {
                    *c += st.w[j] * v;
                }
            }
        }
        for j in 0..3 {
            colors[j].iter_mut().for_each(|c| *c /= mass[j]);
        }
        (colors, mass)
    }

    /// Adds the contribution of `g_colors` (gradient w.r.t. the output of
    /// [`soft_colors`](Self::soft_colors)) to the per-pixel weight gradient.
    pub fn soft_colors_backward(
        &self,
        patch: &[f64],
        k: usize,
        colors: &[Vec<f64>; 3],
        mass: &[f64; 3],
        g_colors: &[Vec<f64>; 3],
        g_w: &mut [[f64; 3]],
    ) {
        for (gw, px) in g_w.iter_mut().zip(patch.chunks_exact(k)) {
            for j in 0..3 {
                let mut acc = 0.0;
                for ch in 0..k {
                    acc += g_colors[j][ch] * (px[ch] - colors[j][ch]);
                }
                gw[j] += acc / mass[j];
            }
        }
    }

    /// Gradient w.r.t. the raw geometry given gradients w.r.t. the weights
    /// and, optionally, the boundary map.
    pub fn backward(&self, g_w: &[[f64; 3]], g_boundary: Option<&[f64]>) -> [f64; 5] {
        let mut g_vertex = [0.0; 2];
        let mut g_angle = [0.0; 3];
        let f = &self.frame;
        let e = self.eps_delta;
        for (i, st) in self.pixels.iter().enumerate() {
            let row = i / self.r;
            let col = i % self.r;
            let (x, y) = local_coords(self.r, row, col);
            let dx = x - f.vertex.0;
            let dy = y - f.vertex.1;
            let gw = &g_w[i];
            let dot: f64 = (0..3).map(|j| gw[j] * st.w[j]).sum();
            let mut g_side = [0.0; 3];
            for j in 0..3 {
                let g_h = (gw[j] - dot) / st.hsum;
                let m = st.margin[j];
                let g_m = g_h * e / (PI * (e * e + m * m));
                if st.from_first[j] {
                    g_side[j] += g_m;
                } else {
                    g_side[(j + 1) % 3] -= g_m;
                }
            }
            if let Some(gb) = g_boundary {
                let b = &self.boundary[i];
                let eps2 = self.boundary_eps * self.boundary_eps;
                let denom = eps2 + b.dist * b.dist;
                let g_d = gb[i] * (-2.0 * eps2 * b.dist / (denom * denom));
                if b.on_segment {
                    let s = f.side(b.edge, dx, dy);
                    g_side[b.edge] += g_d * s.signum();
                } else if b.dist > 0.0 {
                    g_vertex[0] -= g_d * dx / b.dist;
                    g_vertex[1] -= g_d * dy / b.dist;
                }
            }
            for j in 0..3 {
                let g = g_side[j];
                if g == 0.0 {
                    continue;
                }
                g_vertex[0] += g * f.sin[j];
                g_vertex[1] -= g * f.cos[j];
                g_angle[j] += g * (-f.cos[j] * dx - f.sin[j] * dy);
            }
        }
        let mut out = [g_vertex[0], g_vertex[1], 0.0, 0.0, 0.0];
        for j in 0..3 {
            out[2 + self.perm[j]] += g_angle[j];
        }
        out
    }
}

/// Soft reconstruction of `target` from wedge colors measured on `source`
/// (both `r²×k`, row-major): returns the mean squared error and its gradient
/// w.r.t. the raw geometry.
pub fn soft_reconstruction(raw: [f64; 5], source: &[f64], target: &[f64], r: usize, k: usize, eps_delta: f64) -> (f64, [f64; 5]) {
    let sp = SoftPatch::new(raw, r, eps_delta, None);
    let (colors, mass) = sp.soft_colors(source, k);
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut g_w = vec![[0.0; 3]; r * r];
    let mut g_c = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    for (i, px) in target.chunks_exact(k).enumerate() {
        let w = sp.pixels[i].w;
        for ch in 0..k {
            let pred = w[0] * colors[0][ch] + w[1] * colors[1][ch] + w[2] * colors[2][ch];
            let diff = pred - px[ch];
            loss += diff * diff;
            let g = 2.0 * diff / n;
            for j in 0..3 {
                g_w[i][j] += g * colors[j][ch];
                g_c[j][ch] += g * w[j];
            }
        }
    }
    sp.soft_colors_backward(source, k, &colors, &mass, &g_c, &mut g_w);
    (loss / n, sp.backward(&g_w, None))
}
