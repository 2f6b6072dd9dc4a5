//! 2D convolution and max pooling on NCHW tensors.

use crate::element::{gemm, Element};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output spatial size of a strided window, or `None` if the window does
/// not fit.
pub fn window_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Unfolds the whole batch into a `[C·kh·kw, B·OH·OW]` column matrix.
fn im2col<T: Element>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let cols_n = g.batch * g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * cols_n];
    for b in 0..g.batch {
        for c in 0..g.in_ch {
            let plane = &x[(b * g.in_ch + c) * g.h * g.w..][..g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let dst = &mut cols[row * cols_n + b * g.positions()..][..g.positions()];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * g.w..][..g.w];
                        for ox in 0..g.ow {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[oy * g.ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Element>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let cols_n = g.batch * g.positions();
    let mut x = vec![T::zero(); g.batch * g.in_ch * g.h * g.w];
    for b in 0..g.batch {
        for c in 0..g.in_ch {
            let plane = &mut x[(b * g.in_ch + c) * g.h * g.w..][..g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let src = &cols[row * cols_n + b * g.positions()..][..g.positions()];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for ox in 0..g.ow {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                plane[iy as usize * g.w + ix as usize] += src[oy * g.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

impl<T: Element> Tensor<T> {
    /// Cross-correlation of `[B,C,H,W]` input with `[O,C,kh,kw]` weights and
    /// `[O]` bias, zero padded.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 4 {
            return shape_err("conv2d", format!("input must be [B,C,H,W], got {xs:?}"));
        }
        if ws.len() != 4 || ws[1] != xs[1] {
            return shape_err(
                "conv2d",
                format!("weight {ws:?} does not match input channels (axis 1 of {xs:?})"),
            );
        }
        if bias.shape() != [ws[0]] {
            return shape_err("conv2d", format!("bias {:?} for {} filters", bias.shape(), ws[0]));
        }
        let (Some(oh), Some(ow)) = (
            window_output_size(xs[2], ws[2], stride, pad),
            window_output_size(xs[3], ws[3], stride, pad),
        ) else {
            return shape_err(
                "conv2d",
                format!("kernel {}x{} stride {stride} pad {pad} does not fit input {}x{} (axes 2,3)", ws[2], ws[3], xs[2], xs[3]),
            );
        };
        let g = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            oh,
            ow,
        };
        let out_ch = ws[0];
        let cols_n = g.batch * g.positions();
        let cols = im2col(&self.data(), &g);
        let wv = weight.to_vec();
        let mut tmp = vec![T::zero(); out_ch * cols_n];
        gemm(false, false, out_ch, g.patch_len(), cols_n, &wv, &cols, T::zero(), &mut tmp);
        let bv = bias.to_vec();
        let mut out = vec![T::zero(); g.batch * out_ch * g.positions()];
        for o in 0..out_ch {
            for b in 0..g.batch {
                let src = &tmp[o * cols_n + b * g.positions()..][..g.positions()];
                let dst = &mut out[(b * out_ch + o) * g.positions()..][..g.positions()];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = *s + bv[o]);
            }
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            vec![g.batch, out_ch, oh, ow],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            move |gout| {
                // Gather output grads into [O, B·P] to match the column layout.
                let mut gm = vec![T::zero(); out_ch * cols_n];
                let mut gb = vec![T::zero(); out_ch];
                for o in 0..out_ch {
                    for b in 0..g.batch {
                        let src = &gout[(b * out_ch + o) * g.positions()..][..g.positions()];
                        gm[o * cols_n + b * g.positions()..][..g.positions()].copy_from_slice(src);
                        gb[o] += src.iter().copied().sum();
                    }
                }
                let cols = im2col(&x.data(), &g);
                let mut gw = vec![T::zero(); out_ch * g.patch_len()];
                gemm(false, true, out_ch, cols_n, g.patch_len(), &gm, &cols, T::zero(), &mut gw);
                let gx = if x.requires_grad() {
                    let mut gcols = vec![T::zero(); g.patch_len() * cols_n];
                    gemm(true, false, g.patch_len(), out_ch, cols_n, &wv, &gm, T::zero(), &mut gcols);
                    Some(col2im(&gcols, &g))
                } else {
                    None
                };
                vec![gx, Some(gw), Some(gb)]
            },
        ))
    }

    /// Max pooling over `[B,C,H,W]` without padding. Gradient goes to the
    /// first maximal element of each window.
    pub fn maxpool2d(&self, kernel: usize, stride: usize) -> Result<Tensor<T>> {
        let xs = self.shape();
        if xs.len() != 4 {
            return shape_err("maxpool2d", format!("input must be [B,C,H,W], got {xs:?}"));
        }
        let (Some(oh), Some(ow)) = (
            window_output_size(xs[2], kernel, stride, 0),
            window_output_size(xs[3], kernel, stride, 0),
        ) else {
            return shape_err(
                "maxpool2d",
                format!("kernel {kernel} stride {stride} larger than input {}x{} (axes 2,3)", xs[2], xs[3]),
            );
        };
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let x = self.data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let plane = &x[p * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = p * h * w + oy * stride * w + ox * stride;
                    let mut best_v = plane[oy * stride * w + ox * stride];
                    for ki in 0..kernel {
                        for kj in 0..kernel {
                            let idx = (oy * stride + ki) * w + ox * stride + kj;
                            if plane[idx] > best_v {
                                best_v = plane[idx];
                                best = p * h * w + idx;
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        drop(x);
        let n_in = self.numel();
        Ok(Tensor::from_op(
            vec![xs[0], xs[1], oh, ow],
            out,
            vec![self.clone()],
            move |g| {
                let mut gx = vec![T::zero(); n_in];
                for (gv, &i) in g.iter().zip(&argmax) {
                    gx[i] += *gv;
                }
                vec![Some(gx)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity_kernel_is_passthrough() {
        let x: Vec<f32> = (0..2 * 7 * 7).map(|v| v as f32 * 0.1).collect();
        let input = Tensor::from_vec(x.clone(), &[1, 2, 7, 7]).unwrap();
        // Identity over channels.
        let w = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2, 1, 1]).unwrap();
        let b = Tensor::zeros(&[2]);
        let y = input.conv2d(&w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 7, 7]);
        assert_eq!(y.to_vec(), x);
    }

    #[test]
    fn conv_output_size_formula() {
        let input = Tensor::<f32>::zeros(&[1, 3, 81, 81]);
        let w = Tensor::zeros(&[4, 3, 5, 5]);
        let y = input.conv2d(&w, &Tensor::zeros(&[4]), 4, 2).unwrap();
        assert_eq!(y.shape(), &[1, 4, 21, 21]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[1, 3, 8, 8]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let err = input.conv2d(&w, &Tensor::zeros(&[4]), 1, 1).unwrap_err().to_string();
        assert!(err.contains("axis 1"), "{err}");
    }

    #[test]
    fn pool_constant_input_gives_constant_output() {
        let input = Tensor::<f32>::from_vec(vec![2.5; 96 * 21 * 21], &[1, 96, 21, 21]).unwrap();
        let y = input.maxpool2d(3, 2).unwrap();
        assert_eq!(y.shape(), &[1, 96, 10, 10]);
        assert!(y.to_vec().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn pool_rejects_oversized_kernel() {
        let input = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(input.maxpool2d(3, 1).is_err());
    }

    #[test]
    fn pool_ties_route_to_first_occurrence() {
        let input = Tensor::<f64>::param(vec![1.0; 4], &[1, 1, 2, 2]).unwrap();
        input.maxpool2d(2, 2).unwrap().sum().backward().unwrap();
        assert_eq!(input.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
