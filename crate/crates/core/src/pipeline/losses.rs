//! Training objectives: patch reconstruction for the convolutional stage,
//! parameter supervision and whole-image reconstruction for the refinement
//! stage. Each has a plain evaluator and a differentiable tensor op.

use ctbound_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::smooth::{soft_reconstruction, SoftPatch};
use crate::foj::{canonical_angles, render_patch_color, smooth_wedge_weights, wrap_difference, JunctionParams};
use crate::grid::{local_coords, PatchGridSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    /// Piecewise-constant renders.
    Hard,
    /// Predicted map drawn with smooth wedge weights of this width.
    Smooth(f64),
}

/// Mean squared difference between the color maps of `truth` and `pred`.
pub fn loss_init(pred: &JunctionParams, truth: &JunctionParams, r: usize, mode: LossMode) -> Result<f64> {
    if pred.channels() != truth.channels() {
        return Err(Error::InvalidInput("predicted and true junctions differ in channel count".into()));
    }
    let target = render_patch_color(truth, r);
    let k = truth.channels();
    let predicted: Vec<f64> = match mode {
        LossMode::Hard => render_patch_color(pred, r).values,
        LossMode::Smooth(eps) => {
            let mut v = Vec::with_capacity(r * r * k);
            for row in 0..r {
                for col in 0..r {
                    let w = smooth_wedge_weights(local_coords(r, row, col), pred, eps)?;
                    for ch in 0..k {
                        v.push((0..3).map(|j| w[j] * pred.colors[j][ch]).sum());
                    }
                }
            }
            v
        }
    };
    Ok(predicted.iter().zip(&target.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / target.values.len() as f64)
}

/// Batch mean of the soft reconstruction error: each prediction `[B, 5]`
/// colors its wedges from `sources[b]` and is compared with `targets[b]`.
pub fn init_loss_op<T: Element>(
    pred: &Tensor<T>,
    sources: &[&ColorField],
    targets: &[&ColorField],
    eps_delta: f64,
) -> Result<Tensor<T>> {
    let b = check_rows(pred, sources.len(), "init loss")?;
    if targets.len() != b {
        return Err(Error::InvalidInput(format!("{} targets for {b} predictions", targets.len())));
    }
    let raw = rows(pred);
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(5 * b);
    for i in 0..b {
        let (s, t) = (sources[i], targets[i]);
        if (s.height, s.width, s.channels) != (t.height, t.width, t.channels) || s.height != s.width {
            return Err(Error::InvalidInput("source and target patches must be square and alike".into()));
        }
        let (l, g) = soft_reconstruction(raw[i], &s.values, &t.values, s.height, s.channels, eps_delta);
        total += l;
        grads.extend(g.iter().map(|v| v / b as f64));
    }
    scalar_op(pred, total / b as f64, grads)
}

/// Squared parameter error of one patch with angles compared in canonical
/// circular order, taking the best of the three cyclic alignments.
fn ref1_patch(pred: &[f64; 5], truth: &[f64; 5]) -> (f64, [f64; 5]) {
    let (pa, perm) = canonical_angles([pred[2], pred[3], pred[4]]);
    let (ta, _) = canonical_angles([truth[2], truth[3], truth[4]]);
    let dx = pred[0] - truth[0];
    let dy = pred[1] - truth[1];
    let mut best = (f64::INFINITY, [0.0; 3]);
    for shift in 0..3 {
        let d: [f64; 3] = std::array::from_fn(|j| wrap_difference(pa[j] - ta[(j + shift) % 3]));
        let c = d.iter().map(|v| v * v).sum::<f64>();
        if c < best.0 {
            best = (c, d);
        }
    }
    let mut g = [2.0 * dx, 2.0 * dy, 0.0, 0.0, 0.0];
    for j in 0..3 {
        g[2 + perm[j]] = 2.0 * best.1[j];
    }
    (dx * dx + dy * dy + best.0, g)
}

/// Mean over patches of vertex and wrapped angle squared errors.
pub fn loss_ref1(pred: &[JunctionParams], truth: &[JunctionParams]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::InvalidInput(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| ref1_patch(&p.geometry_vector(), &t.geometry_vector()).0).sum();
    Ok(sum / pred.len() as f64)
}

pub fn ref1_loss_op<T: Element>(pred: &Tensor<T>, truth: &[[f64; 5]]) -> Result<Tensor<T>> {
    let n = check_rows(pred, truth.len(), "parameter loss")?;
    let raw = rows(pred);
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(5 * n);
    for (p, t) in raw.iter().zip(truth) {
        let (l, g) = ref1_patch(p, t);
        total += l;
        grads.extend(g.iter().map(|v| v / n as f64));
    }
    scalar_op(pred, total / n as f64, grads)
}

/// Smoothing and weighting of the whole-image loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ref2Settings {
    pub lambda_boundary: f64,
    pub lambda_color: f64,
    pub eps_delta: f64,
    pub boundary_eps: f64,
}

impl Default for Ref2Settings {
    fn default() -> Self {
        Ref2Settings { lambda_boundary: 0.5, lambda_color: 0.1, eps_delta: 0.05, boundary_eps: 0.5 }
    }
}

/// The three sums of the whole-image loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ref2Terms {
    pub patch: f64,
    pub boundary: f64,
    pub color: f64,
}

impl Ref2Terms {
    pub fn total(&self, s: &Ref2Settings) -> f64 {
        self.patch + s.lambda_boundary * self.boundary + s.lambda_color * self.color
    }
}

/// Sums over patches of the wedge-color fit to the image, the deviation of
/// each boundary map from the global mean boundary, and the deviation of
/// each patch color map from the global color map. The global maps are
/// averages over the patches, so the gradient through them vanishes.
pub fn ref2_terms(
    raw: &[[f64; 5]],
    image: &ColorField,
    grid: &PatchGridSpec,
    settings: &Ref2Settings,
    want_grad: bool,
) -> Result<(Ref2Terms, Vec<[f64; 5]>)> {
    grid.check_image(image)?;
    if raw.len() != grid.count() {
        return Err(Error::InvalidInput(format!("{} junctions for a grid of {}", raw.len(), grid.count())));
    }
    let r = grid.patch_size;
    let k = image.channels;
    let w_img = image.width;
    let counts = grid.cover_counts();
    let mut global_b = vec![0.0; image.height * w_img];
    let mut global_c = vec![0.0; image.height * w_img * k];
    let mut patches = Vec::with_capacity(raw.len());
    for (i, g) in raw.iter().enumerate() {
        let (m, n) = grid.index(i);
        let (r0, c0) = grid.origin(m, n);
        let data = image.window(r0, c0, r).values;
        let sp = SoftPatch::new(*g, r, settings.eps_delta, Some(settings.boundary_eps));
        let (colors, mass) = sp.soft_colors(&data, k);
        let b = sp.boundary();
        for row in 0..r {
            for col in 0..r {
                let px = row * r + col;
                let gi = (r0 + row) * w_img + c0 + col;
                global_b[gi] += b[px];
                for ch in 0..k {
                    global_c[gi * k + ch] += (0..3).map(|j| sp.weight(px, j) * colors[j][ch]).sum::<f64>();
                }
            }
        }
        patches.push((sp, data, colors, mass, b, r0, c0));
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            global_b[i] /= c as f64;
            global_c[i * k..(i + 1) * k].iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    let mut terms = Ref2Terms { patch: 0.0, boundary: 0.0, color: 0.0 };
    let mut grads = Vec::with_capacity(if want_grad { raw.len() } else { 0 });
    for (sp, data, colors, mass, b, r0, c0) in &patches {
        let mut g_w = vec![[0.0; 3]; r * r];
        let mut g_b = vec![0.0; r * r];
        let mut g_c = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
        for row in 0..r {
            for col in 0..r {
                let px = row * r + col;
                let gi = (r0 + row) * w_img + c0 + col;
                let db = global_b[gi] - b[px];
                terms.boundary += db * db;
                g_b[px] = -2.0 * settings.lambda_boundary * db;
                let w = [0, 1, 2].map(|j| sp.weight(px, j));
                for ch in 0..k {
                    let cp: f64 = (0..3).map(|j| w[j] * colors[j][ch]).sum();
                    let dc = cp - global_c[gi * k + ch];
                    terms.color += dc * dc;
                    let g_cp = 2.0 * settings.lambda_color * dc;
                    for j in 0..3 {
                        g_w[px][j] += g_cp * colors[j][ch];
                        g_c[j][ch] += g_cp * w[j];
                    }
                }
                for j in 0..3 {
                    let mut ep = 0.0;
                    for ch in 0..k {
                        let dp = colors[j][ch] - data[px * k + ch];
                        ep += dp * dp;
                        g_c[j][ch] += 2.0 * w[j] * dp;
                    }
                    terms.patch += w[j] * ep;
                    g_w[px][j] += ep;
                }
            }
        }
        if want_grad {
            sp.soft_colors_backward(data, k, colors, mass, &g_c, &mut g_w);
            grads.push(sp.backward(&g_w, Some(&g_b)));
        }
    }
    Ok((terms, grads))
}

/// Whole-image loss of refined junctions (geometry only; colors are
/// re-measured on `image` with smooth wedges).
pub fn loss_ref2(params: &[JunctionParams], image: &ColorField, grid: &PatchGridSpec, settings: &Ref2Settings) -> Result<f64> {
    let raw: Vec<[f64; 5]> = params.iter().map(|p| p.geometry_vector()).collect();
    Ok(ref2_terms(&raw, image, grid, settings, false)?.0.total(settings))
}

/// Differentiable whole-image loss on `[N, 5]` raw geometry, multiplied by `scale`.
pub fn ref2_loss_op<T: Element>(
    pred: &Tensor<T>,
    image: &ColorField,
    grid: &PatchGridSpec,
    settings: &Ref2Settings,
    scale: f64,
) -> Result<Tensor<T>> {
    check_rows(pred, grid.count(), "image loss")?;
    let (terms, g) = ref2_terms(&rows(pred), image, grid, settings, true)?;
    scalar_op(pred, scale * terms.total(settings), g.iter().flatten().map(|v| v * scale).collect())
}

fn check_rows<T: Element>(pred: &Tensor<T>, n: usize, op: &str) -> Result<usize> {
    let s = pred.shape();
    if s.len() != 2 || s[1] != 5 || s[0] != n {
        return Err(Error::InvalidInput(format!("{op}: predictions {s:?} do not match [{n}, 5]")));
    }
    Ok(n)
}

fn rows<T: Element>(pred: &Tensor<T>) -> Vec<[f64; 5]> {
    pred.data().chunks_exact(5).map(|r| std::array::from_fn(|i| r[i].as_f64())).collect()
}

fn scalar_op<T: Element>(pred: &Tensor<T>, value: f64, grad: Vec<f64>) -> Result<Tensor<T>> {
    Ok(Tensor::custom(&[pred], &[], vec![T::from_f64_lossy(value)], move |g_out| {
        let s = g_out[0].as_f64();
        vec![Some(grad.iter().map(|v| T::from_f64_lossy(v * s)).collect())]
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn j(vertex: (f64, f64), angles: [f64; 3], colors: [f64; 3]) -> JunctionParams {
        JunctionParams::from_raw(vertex, angles, colors.map(|c| vec![c])).unwrap()
    }

    #[test]
    fn init_loss_cases() {
        let t = j((0.5, -1.0), [0.2, 2.0, 4.0], [0.1, 0.5, 0.9]);
        assert_eq!(loss_init(&t, &t, 11, LossMode::Hard).unwrap(), 0.0);
        // A vertex far outside leaves two wedges empty.
        let far = j((40.0, 0.0), [-0.2, 0.0, 0.2], [0.3, 0.6, 0.9]);
        let mut other = far.clone();
        other.colors[0] = vec![0.0];
        other.colors[2] = vec![0.0];
        assert_eq!(loss_init(&other, &far, 11, LossMode::Hard).unwrap(), 0.0);
    }

    #[test]
    fn ref1_cases() {
        let t = j((0.0, 0.0), [0.5, 2.0, 4.0], [0.0; 3]);
        let shifted = JunctionParams { vertex: (1.0, 0.0), ..t.clone() };
        assert_eq!(loss_ref1(&[t.clone()], &[t.clone()]).unwrap(), 0.0);
        assert!((loss_ref1(&[shifted], &[t.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let (l, _) = ref1_patch(&[0.0, 0.0, 0.5 + TAU, 2.0, 4.0 - TAU], &t.geometry_vector());
        assert!(l < 1e-20);
        // Crossing zero only reorders the canonical list.
        let (l, _) = ref1_patch(&[0.0, 0.0, -0.01, 2.0, 4.0], &[0.0, 0.0, 0.01, 2.0, 4.0]);
        assert!((l - 4e-4).abs() < 1e-12);
    }

    #[test]
    fn single_patch_has_no_consistency_terms() {
        let grid = PatchGridSpec::new(9, 9, 9, 9, 1).unwrap();
        let img = ColorField::from_vec(9, 9, 1, (0..81).map(|i| (i % 5) as f64 / 4.0).collect()).unwrap();
        let (t, _) = ref2_terms(&[[0.3, -0.2, 0.1, 2.0, 4.5]], &img, &grid, &Ref2Settings::default(), false).unwrap();
        assert!(t.boundary.abs() < 1e-24 && t.color.abs() < 1e-24);
        assert!(t.patch > 0.0);
    }

    fn check(inputs: Vec<f64>, f: impl Fn(&Tensor<f64>) -> ctbound_tensor::Result<Tensor<f64>>) -> f64 {
        let n = inputs.len() / 5;
        let x = Tensor::param(inputs, &[n, 5]).unwrap();
        let cfg = ctbound_tensor::GradCheckConfig { step: 1e-6, floor: 1e-4 };
        ctbound_tensor::gradcheck(&[x], |t| f(&t[0]), cfg).unwrap().max_rel_error
    }

    fn op_err(e: Error) -> ctbound_tensor::TensorError {
        ctbound_tensor::TensorError::Config(e.to_string())
    }

    #[test]
    fn ops_match_finite_differences() {
        let grid = PatchGridSpec::new(11, 12, 7, 2, 2).unwrap();
        let img = ColorField::from_vec(11, 12, 2, (0..264).map(|i| ((i * 31) % 17) as f64 / 16.0).collect()).unwrap();
        let raw: Vec<f64> = (0..grid.count() * 5).map(|i| ((i * 7919) % 97) as f64 / 97.0 * 6.0 - 1.5).collect();
        let s = Ref2Settings { eps_delta: 0.4, boundary_eps: 0.7, ..Default::default() };
        let e = check(raw.clone(), |x| ref2_loss_op(x, &img, &grid, &s, 0.01).map_err(op_err));
        assert!(e < 1e-3, "image loss {e}");

        let truth: Vec<[f64; 5]> = (0..grid.count()).map(|i| [0.5, -1.0, 0.3 * i as f64, 2.5, 4.7]).collect();
        let e = check(raw.clone(), |x| ref1_loss_op(x, &truth).map_err(op_err));
        assert!(e < 1e-3, "parameter loss {e}");

        let a = img.window(0, 0, 7);
        let b = img.window(3, 4, 7);
        let e = check(raw[..10].to_vec(), |x| init_loss_op(x, &[&a, &b], &[&b, &a], 0.3).map_err(op_err));
        assert!(e < 1e-3, "patch loss {e}");
    }
}
