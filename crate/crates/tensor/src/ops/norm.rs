//! Row-wise softmax and layer normalization over the last axis.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let Some(&cols) = self.shape().last() else {
            return shape_err("softmax", "scalar input");
        };
        let mut y = self.to_vec();
        for row in y.chunks_mut(cols) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v = *v / total);
        }
        let saved = y.clone();
        Ok(Tensor::from_op(self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), out) in g.chunks(cols).zip(saved.chunks(cols)).zip(gx.chunks_mut(cols)) {
                let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
                for ((o, gv), yv) in out.iter_mut().zip(gr).zip(yr) {
                    *o = *yv * (*gv - dot);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Normalizes each row to zero mean / unit variance, then applies the
    /// elementwise affine `gain`, `bias` (both of last-axis length).
    pub fn layer_norm(&self, gain: &Tensor<T>, bias: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let Some(&cols) = self.shape().last() else {
            return shape_err("layer_norm", "scalar input");
        };
        if gain.shape() != [cols] || bias.shape() != [cols] {
            return shape_err(
                "layer_norm",
                format!("gain {:?} / bias {:?} for last axis {cols}", gain.shape(), bias.shape()),
            );
        }
        let n = T::from_usize(cols).unwrap();
        let x = self.data();
        let gv = gain.to_vec();
        let bv = bias.to_vec();
        let rows = x.len() / cols;
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * cols..][..cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * gv[c] + bv[c];
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                let mut gx = vec![T::zero(); g.len()];
                let mut ggain = vec![T::zero(); cols];
                let mut gbias = vec![T::zero(); cols];
                for r in 0..rows {
                    let gr = &g[r * cols..][..cols];
                    let hr = &xhat[r * cols..][..cols];
                    let mut sum_d = T::zero();
                    let mut sum_dh = T::zero();
                    for c in 0..cols {
                        ggain[c] += gr[c] * hr[c];
                        gbias[c] += gr[c];
                        let d = gr[c] * gv[c];
                        sum_d += d;
                        sum_dh += d * hr[c];
                    }
                    for c in 0..cols {
                        let d = gr[c] * gv[c];
                        gx[r * cols + c] = inv_std[r] * (d - sum_d / n - hr[c] * sum_dh / n);
                    }
                }
                vec![Some(gx), Some(ggain), Some(gbias)]
            },
        ))
    }
}
