//! Elementwise ops, reductions, reshapes and matrix products.

use crate::element::{gemm, Element};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    fn same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return shape_err(op, format!("{:?} vs {:?}", self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data().iter()).map(|(a, b)| *a + *b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "sub")?;
        let data = self.data().iter().zip(other.data().iter()).map(|(a, b)| *a - *b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -*v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "mul")?;
        let a = self.to_vec();
        let b = other.to_vec();
        let data = a.iter().zip(&b).map(|(x, y)| *x * *y).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = g.iter().zip(&b).map(|(g, y)| *g * *y).collect();
                let gb = g.iter().zip(&a).map(|(g, x)| *g * *x).collect();
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        let data = self.data().iter().map(|v| *v * s).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g| {
            vec![Some(g.iter().map(|v| *v * s).collect())]
        })
    }

    /// Adds `bias` (length = last dimension) to every row.
    pub fn add_bias(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let last = *self.shape().last().unwrap_or(&1);
        if bias.shape() != [last] {
            return shape_err("add_bias", format!("bias {:?} for input {:?}", bias.shape(), self.shape()));
        }
        let mut data = self.to_vec();
        {
            let b = bias.data();
            for row in data.chunks_mut(last) {
                row.iter_mut().zip(b.iter()).for_each(|(v, b)| *v += *b);
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), bias.clone()],
            move |g| {
                let mut gb = vec![T::zero(); last];
                for row in g.chunks(last) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
                }
                vec![Some(g.to_vec()), Some(gb)]
            },
        ))
    }

    pub fn relu(&self) -> Tensor<T> {
        let x = self.to_vec();
        let data = x.iter().map(|v| if *v > T::zero() { *v } else { T::zero() }).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g| {
            let gx = g
                .iter()
                .zip(&x)
                .map(|(g, v)| if *v > T::zero() { *g } else { T::zero() })
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn sum(&self) -> Tensor<T> {
        let n = self.numel();
        let s = self.data().iter().copied().sum();
        Tensor::from_op(vec![], vec![s], vec![self.clone()], move |g| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().scale(T::one() / T::from_usize(n).unwrap())
    }

    /// Mean squared difference against a constant target.
    pub fn mse(&self, target: &[T]) -> Result<Tensor<T>> {
        if target.len() != self.numel() {
            return shape_err("mse", format!("target has {} values for {:?}", target.len(), self.shape()));
        }
        let n = T::from_usize(self.numel().max(1)).unwrap();
        let diff: Vec<T> = self.data().iter().zip(target).map(|(a, b)| *a - *b).collect();
        let loss = diff.iter().map(|d| *d * *d).sum::<T>() / n;
        Ok(Tensor::from_op(vec![], vec![loss], vec![self.clone()], move |g| {
            let two = T::from_f64_lossy(2.0);
            vec![Some(diff.iter().map(|d| g[0] * two * *d / n).collect())]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return shape_err("reshape", format!("{:?} -> {shape:?}", self.shape()));
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), vec![self.clone()], |g| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return shape_err("permute", format!("axes {axes:?} for rank {rank}"));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let index = permutation_index(&in_shape, axes);
        let src = self.data();
        let data = index.iter().map(|&i| src[i]).collect();
        drop(src);
        Ok(Tensor::from_op(out_shape, data, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for (o, &i) in index.iter().enumerate() {
                gx[i] = g[o];
            }
            vec![Some(gx)]
        }))
    }

    /// `[m,k] · [k,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return shape_err("matmul", format!("{a:?} x {b:?}"));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let av = self.to_vec();
        let bv = other.to_vec();
        let mut out = vec![T::zero(); m * n];
        gemm(false, false, m, k, n, &av, &bv, T::zero(), &mut out);
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let mut ga = vec![T::zero(); m * k];
                gemm(false, true, m, n, k, g, &bv, T::zero(), &mut ga);
                let mut gb = vec![T::zero(); k * n];
                gemm(true, false, k, m, n, &av, g, T::zero(), &mut gb);
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    /// Batched product over the leading axis: `[b,m,k] · [b,k,n]`, with
    /// optional transposition of either operand's last two axes.
    pub fn bmm(&self, other: &Tensor<T>, trans_a: bool, trans_b: bool) -> Result<Tensor<T>> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 3 || b.len() != 3 || a[0] != b[0] {
            return shape_err("bmm", format!("{a:?} x {b:?}"));
        }
        let batch = a[0];
        let (m, k) = if trans_a { (a[2], a[1]) } else { (a[1], a[2]) };
        let (kb, n) = if trans_b { (b[2], b[1]) } else { (b[1], b[2]) };
        if k != kb {
            return shape_err("bmm", format!("inner dims {k} vs {kb} ({a:?} x {b:?})"));
        }
        let av = self.to_vec();
        let bv = other.to_vec();
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                trans_a,
                trans_b,
                m,
                k,
                n,
                &av[i * m * k..(i + 1) * m * k],
                &bv[i * k * n..(i + 1) * k * n],
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        Ok(Tensor::from_op(
            vec![batch, m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let mut ga = vec![T::zero(); batch * m * k];
                let mut gb = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &av[i * m * k..(i + 1) * m * k];
                    let bi = &bv[i * k * n..(i + 1) * k * n];
                    let ga_i = &mut ga[i * m * k..(i + 1) * m * k];
                    // dA = G·B^T (A stored [m,k]) or B·G^T (A stored [k,m]).
                    if trans_a {
                        gemm(trans_b, true, k, n, m, bi, gi, T::zero(), ga_i);
                    } else {
                        gemm(false, !trans_b, m, n, k, gi, bi, T::zero(), ga_i);
                    }
                    let gb_i = &mut gb[i * k * n..(i + 1) * k * n];
                    // dB = A^T·G (B stored [k,n]) or G^T·A (B stored [n,k]).
                    if trans_b {
                        gemm(true, trans_a, n, m, k, gi, ai, T::zero(), gb_i);
                    } else {
                        gemm(!trans_a, false, k, m, n, ai, gi, T::zero(), gb_i);
                    }
                }
                vec![Some(ga), Some(gb)]
            },
        ))
    }
}

/// For each output position (row-major), the flat input index it reads.
fn permutation_index(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total: usize = in_shape.iter().product();
    let mut index = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    for _ in 0..total {
        index.push(counter.iter().zip(&strides).map(|(c, s)| c * s).sum());
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            if counter[ax] < out_shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    index
}
