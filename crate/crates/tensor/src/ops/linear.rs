use crate::element::{gemm, Element};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    /// `x · W + b` over the last axis; `W` is `[in, out]`, `b` is `[out]`.
    /// All leading axes are treated as rows.
    pub fn linear(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let Some(&fan_in) = xs.last() else {
            return shape_err("linear", "scalar input");
        };
        if ws.len() != 2 || ws[0] != fan_in {
            return shape_err("linear", format!("weight {ws:?} for input last axis {fan_in} ({xs:?})"));
        }
        let fan_out = ws[1];
        if bias.shape() != [fan_out] {
            return shape_err("linear", format!("bias {:?} for {fan_out} outputs", bias.shape()));
        }
        let rows = self.numel() / fan_in.max(1);
        let xv = self.to_vec();
        let wv = weight.to_vec();
        let mut out = Vec::with_capacity(rows * fan_out);
        {
            let b = bias.data();
            for _ in 0..rows {
                out.extend_from_slice(&b);
            }
        }
        gemm(false, false, rows, fan_in, fan_out, &xv, &wv, T::one(), &mut out);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = fan_out;
        let x_needs = self.requires_grad();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            move |g| {
                let gx = x_needs.then(|| {
                    let mut gx = vec![T::zero(); rows * fan_in];
                    gemm(false, true, rows, fan_out, fan_in, g, &wv, T::zero(), &mut gx);
                    gx
                });
                let mut gw = vec![T::zero(); fan_in * fan_out];
                gemm(true, false, fan_in, rows, fan_out, &xv, g, T::zero(), &mut gw);
                let mut gb = vec![T::zero(); fan_out];
                for row in g.chunks(fan_out) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
                }
                vec![gx, Some(gw), Some(gb)]
            },
        ))
    }
}
