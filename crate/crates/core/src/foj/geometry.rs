//! Closed-form junction geometry: ray distances, the smoothed step and
//! hard wedge membership.

use std::f64::consts::{PI, TAU};

use crate::error::{require_positive, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap_difference(d: f64) -> f64 {
    let w = wrap_angle(d);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Wrapped and sorted angles plus the permutation: `sorted[j] = wrap(raw[perm[j]])`.
pub fn canonical_angles(raw: [f64; 3]) -> ([f64; 3], [usize; 3]) {
    let wrapped = raw.map(wrap_angle);
    let mut perm = [0usize, 1, 2];
    perm.sort_by(|&a, &b| wrapped[a].total_cmp(&wrapped[b]));
    (perm.map(|i| wrapped[i]), perm)
}

/// Distance from `point` to the half-line leaving `vertex` in direction `angle`.
pub fn ray_distance(point: (f64, f64), vertex: (f64, f64), angle: f64) -> f64 {
    let dx = point.0 - vertex.0;
    let dy = point.1 - vertex.1;
    let (s, c) = angle.sin_cos();
    let t = dx * c + dy * s;
    if t >= 0.0 {
        (c * dy - s * dx).abs()
    } else {
        dx.hypot(dy)
    }
}

/// `½(1 + (2/π)·atan(d/ε))`.
pub fn smooth_heaviside(d: f64, eps: f64) -> Result<f64> {
    require_positive("epsilon", eps)?;
    Ok(heaviside_unchecked(d, eps))
}

#[inline]
pub(crate) fn heaviside_unchecked(d: f64, eps: f64) -> f64 {
    0.5 + (d / eps).atan() / PI
}

/// Derivative of [`smooth_heaviside`] scaled by `πε`, i.e. `ε²/(ε²+d²)`.
pub fn boundary_intensity(d: f64, eps: f64) -> Result<f64> {
    require_positive("epsilon", eps)?;
    if d < 0.0 || d.is_nan() {
        return Err(crate::Error::InvalidParameter(format!("distance must be non-negative, got {d}")));
    }
    Ok(intensity_unchecked(d, eps))
}

#[inline]
pub(crate) fn intensity_unchecked(d: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    e2 / (e2 + d * d)
}

/// Precomputed edge directions of one junction for repeated membership tests.
///
/// Wedge `j` spans the directions from edge `j` to edge `j+1` (mod 3) with
/// increasing angle. A point belongs to it when it lies on the positive side
/// of edge `j` and the negative side of edge `j+1`; for a wedge wider than π
/// either condition suffices.
#[derive(Debug, Clone, Copy)]
pub struct WedgeFrame {
    pub vertex: (f64, f64),
    pub cos: [f64; 3],
    pub sin: [f64; 3],
    /// Angular width of each wedge.
    pub gaps: [f64; 3],
}

impl WedgeFrame {
    /// `angles` must be sorted in `[0, 2π)`.
    pub fn new(vertex: (f64, f64), angles: [f64; 3]) -> Self {
        let gaps = [angles[1] - angles[0], angles[2] - angles[1], angles[0] + TAU - angles[2]];
        WedgeFrame {
            vertex,
            cos: angles.map(f64::cos),
            sin: angles.map(f64::sin),
            gaps,
        }
    }

    /// Signed side of `(dx, dy)` relative to edge `j`: positive toward larger angles.
    #[inline]
    pub fn side(&self, j: usize, dx: f64, dy: f64) -> f64 {
        self.cos[j] * dy - self.sin[j] * dx
    }

    /// Whether the offset `(dx, dy)` from the vertex lies in the closed wedge `j`.
    #[inline]
    pub fn contains(&self, j: usize, dx: f64, dy: f64) -> bool {
        let k = (j + 1) % 3;
        let a = self.side(j, dx, dy);
        let b = self.side(k, dx, dy);
        if self.gaps[j] == 0.0 {
            a == 0.0 && self.cos[j] * dx + self.sin[j] * dy >= 0.0
        } else if self.gaps[j] < PI {
            a >= 0.0 && b <= 0.0
        } else {
            a >= 0.0 || b <= 0.0
        }
    }

    /// Signed margin of membership in wedge `j` (non-negative inside).
    #[inline]
    pub fn margin(&self, j: usize, dx: f64, dy: f64) -> f64 {
        let a = self.side(j, dx, dy);
        let b = -self.side((j + 1) % 3, dx, dy);
        if self.gaps[j] < PI {
            a.min(b)
        } else {
            a.max(b)
        }
    }

    /// Hard wedge index of a point; the lowest index wins on shared boundaries.
    pub fn index(&self, x: f64, y: f64) -> usize {
        let dx = x - self.vertex.0;
        let dy = y - self.vertex.1;
        for j in 0..3 {
            if self.contains(j, dx, dy) {
                return j;
            }
        }
        // Unreachable for sorted angles in exact arithmetic; guard rounding.
        (0..3)
            .max_by(|&a, &b| self.margin(a, dx, dy).total_cmp(&self.margin(b, dx, dy)).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    /// Distance from a point to the nearest of the edges selected by `include`.
    pub fn min_ray_distance(&self, x: f64, y: f64, include: [bool; 3]) -> f64 {
        let dx = x - self.vertex.0;
        let dy = y - self.vertex.1;
        let mut best = f64::INFINITY;
        for j in 0..3 {
            if !include[j] {
                continue;
            }
            let t = dx * self.cos[j] + dy * self.sin[j];
            let d = if t >= 0.0 { self.side(j, dx, dy).abs() } else { dx.hypot(dy) };
            best = best.min(d);
        }
        best
    }
}
