//! Layers built from the tensor ops: dense, convolution, layer norm,
//! multi-head self-attention and pre-norm transformer encoder blocks.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Anything that owns trainable parameters.
pub trait Module<T: Element> {
    /// Calls `f` with every parameter and its dotted name.
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>));

    fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, t| out.push((name, t.clone())));
        out
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    fn zero_grad(&self) {
        self.visit_params("", &mut |_, t| t.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn uniform_param<T: Element, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..n).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
    Tensor::param(data, shape).expect("shape matches")
}

fn const_param<T: Element>(shape: &[usize], value: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::param(vec![T::from_f64_lossy(value); n], shape).expect("shape matches")
}

#[derive(Debug, Clone)]
pub struct Linear<T: Element = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Linear<T> {
    /// Variance-preserving (LeCun) uniform init.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self::with_bound(fan_in, fan_out, (3.0 / fan_in as f64).sqrt(), rng)
    }

    /// He uniform init, for layers followed by ReLU.
    pub fn he<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self::with_bound(fan_in, fan_out, (6.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn with_bound<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, bound: f64, rng: &mut R) -> Self {
        Linear {
            weight: uniform_param(rng, &[fan_in, fan_out], bound),
            bias: const_param(&[fan_out], 0.0),
        }
    }

    /// All-zero weights and bias.
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: const_param(&[fan_in, fan_out], 0.0),
            bias: const_param(&[fan_out], 0.0),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(&self.weight, &self.bias)
    }
}

impl<T: Element> Module<T> for Linear<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d<T: Element = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv2d<T> {
    /// Square kernel, He uniform init.
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Conv2d {
            weight: uniform_param(rng, &[out_ch, in_ch, kernel, kernel], (6.0 / fan_in as f64).sqrt()),
            bias: const_param(&[out_ch], 0.0),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(&self.weight, &self.bias, self.stride, self.pad)
    }
}

impl<T: Element> Module<T> for Conv2d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<T: Element = f32> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
    pub eps: f64,
}

impl<T: Element> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: const_param(&[dim], 1.0),
            bias: const_param(&[dim], 0.0),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(&self.gain, &self.bias, T::from_f64_lossy(self.eps))
    }
}

impl<T: Element> Module<T> for LayerNorm<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(join(prefix, "gain"), &self.gain);
        f(join(prefix, "bias"), &self.bias);
    }
}

/// Scaled dot-product self-attention over the rows of an `[n, d]` input,
/// with learned query/key/value/output projections and no masking.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T: Element = f32> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub heads: usize,
}

impl<T: Element> MultiHeadAttention<T> {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(TensorError::Config(format!(
                "model dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            output: Linear::new(dim, dim, rng),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.fan_in()
    }

    /// `[n, d]` -> `[n, h, d/h]` -> `[h, n, d/h]`.
    fn split_heads(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.shape()[0];
        let dh = self.dim() / self.heads;
        x.reshape(&[n, self.heads, dh])?.permute(&[1, 0, 2])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let xs = x.shape();
        if xs.len() != 2 || xs[1] != self.dim() {
            return Err(TensorError::Shape {
                op: "attention",
                detail: format!("input {xs:?} for model dimension {}", self.dim()),
            });
        }
        let n = xs[0];
        let dh = self.dim() / self.heads;
        let q = self.split_heads(&self.query.forward(x)?)?;
        let k = self.split_heads(&self.key.forward(x)?)?;
        let v = self.split_heads(&self.value.forward(x)?)?;
        let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let attn = q.bmm(&k, false, true)?.scale(scale).softmax()?;
        let mixed = attn.bmm(&v, false, false)?;
        let merged = mixed.permute(&[1, 0, 2])?.reshape(&[n, self.dim()])?;
        self.output.forward(&merged)
    }
}

impl<T: Element> Module<T> for MultiHeadAttention<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.query.visit_params(&join(prefix, "query"), f);
        self.key.visit_params(&join(prefix, "key"), f);
        self.value.visit_params(&join(prefix, "value"), f);
        self.output.visit_params(&join(prefix, "output"), f);
    }
}

/// Pre-norm encoder block:
/// `x + attn(ln1(x))`, then `x + ff2(relu(ff1(ln2(x))))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer<T: Element = f32> {
    pub norm1: LayerNorm<T>,
    pub attention: MultiHeadAttention<T>,
    pub norm2: LayerNorm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
}

impl<T: Element> EncoderLayer<T> {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, ff_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(EncoderLayer {
            norm1: LayerNorm::new(dim),
            attention: MultiHeadAttention::new(dim, heads, rng)?,
            norm2: LayerNorm::new(dim),
            ff1: Linear::he(dim, ff_dim, rng),
            ff2: Linear::new(ff_dim, dim, rng),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.attention.forward(&self.norm1.forward(x)?)?;
        let x = x.add(&a)?;
        let h = self.ff1.forward(&self.norm2.forward(&x)?)?.relu();
        x.add(&self.ff2.forward(&h)?)
    }
}

impl<T: Element> Module<T> for EncoderLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.norm1.visit_params(&join(prefix, "norm1"), f);
        self.attention.visit_params(&join(prefix, "attention"), f);
        self.norm2.visit_params(&join(prefix, "norm2"), f);
        self.ff1.visit_params(&join(prefix, "ff1"), f);
        self.ff2.visit_params(&join(prefix, "ff2"), f);
    }
}

/// A stack of [`EncoderLayer`]s followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct Encoder<T: Element = f32> {
    pub layers: Vec<EncoderLayer<T>>,
    pub final_norm: LayerNorm<T>,
}

impl<T: Element> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        layers: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Encoder {
            layers: (0..layers)
                .map(|_| EncoderLayer::new(dim, heads, ff_dim, rng))
                .collect::<Result<_>>()?,
            final_norm: LayerNorm::new(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.final_norm.gain.numel()
    }

    pub fn heads(&self) -> usize {
        self.layers.first().map_or(0, |l| l.attention.heads)
    }

    pub fn ff_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.ff1.fan_out())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        self.final_norm.forward(&h)
    }
}

impl<T: Element> Module<T> for Encoder<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit_params(&join(prefix, &format!("layers.{i}")), f);
        }
        self.final_norm.visit_params(&join(prefix, "final_norm"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attention_requires_divisible_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = MultiHeadAttention::<f32>::new(10, 3, &mut rng).unwrap_err();
        assert!(matches!(err, TensorError::Config(_)));
    }

    #[test]
    fn single_token_attention_is_projection_of_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadAttention::<f64>::new(8, 2, &mut rng).unwrap();
        let x = Tensor::from_vec((0..8).map(|v| v as f64 * 0.3 - 1.0).collect(), &[1, 8]).unwrap();
        let y = mha.forward(&x).unwrap();
        let expected = mha.output.forward(&mha.value.forward(&x).unwrap()).unwrap();
        for (a, b) in y.to_vec().iter().zip(expected.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn param_names_are_hierarchical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = Encoder::<f32>::new(8, 2, 2, 16, &mut rng).unwrap();
        let names: Vec<String> = enc.named_params().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"layers.1.attention.query.weight".to_string()));
        assert!(names.contains(&"final_norm.gain".to_string()));
    }
}
