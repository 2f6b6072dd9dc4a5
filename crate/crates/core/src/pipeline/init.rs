//! Convolutional stage: one junction geometry per patch.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ctbound_tensor::{Checkpoint, Conv2d, Linear, Module, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::{canonical_angles, estimate_wedge_colors, JunctionParams};

/// Layer widths and input geometry of the convolutional stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitModelConfig {
    pub patch_size: usize,
    /// Patches are bilinearly resized to this side before the first layer.
    pub upsample: usize,
    pub channels: usize,
    /// Output channels of the five convolutions.
    pub conv: [usize; 5],
    /// Widths of the two hidden fully connected layers.
    pub fc: [usize; 2],
}

impl InitModelConfig {
    /// Full-size layer widths.
    pub fn full(channels: usize) -> Self {
        InitModelConfig { patch_size: 21, upsample: 81, channels, conv: [96, 256, 384, 384, 256], fc: [4096, 1024] }
    }

    /// Narrow widths for single-core training and inference.
    pub fn desk(channels: usize) -> Self {
        InitModelConfig { patch_size: 21, upsample: 81, channels, conv: [16, 32, 48, 48, 32], fc: [256, 128] }
    }

    fn validate(&self) -> Result<()> {
        if self.patch_size < 2 || self.channels == 0 || self.conv.contains(&0) || self.fc.contains(&0) {
            return Err(Error::Config("init model sizes must be positive (patch size at least 2)".into()));
        }
        let s = spatial_sizes(self.upsample);
        if s.iter().any(|&v| v == 0) {
            return Err(Error::Config(format!("upsample size {} is too small for the layer stack", self.upsample)));
        }
        Ok(())
    }

    pub(crate) fn to_meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("kind".into(), "init".into());
        m.insert("patch_size".into(), self.patch_size.to_string());
        m.insert("upsample".into(), self.upsample.to_string());
        m.insert("channels".into(), self.channels.to_string());
        m.insert("conv".into(), join(&self.conv));
        m.insert("fc".into(), join(&self.fc));
        m
    }

    pub(crate) fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        if meta.get("kind").map(String::as_str) != Some("init") {
            return Err(Error::Config("checkpoint is not an init-stage model".into()));
        }
        Ok(InitModelConfig {
            patch_size: meta_usize(meta, "patch_size")?,
            upsample: meta_usize(meta, "upsample")?,
            channels: meta_usize(meta, "channels")?,
            conv: meta_list(meta, "conv")?,
            fc: meta_list(meta, "fc")?,
        })
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn meta_usize(meta: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks `{key}`")))
}

fn meta_list<const N: usize>(meta: &BTreeMap<String, String>, key: &str) -> Result<[usize; N]> {
    let v: Vec<usize> = meta
        .get(key)
        .map(|s| s.split(',').filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    v.try_into().map_err(|_| Error::Config(format!("checkpoint metadata `{key}` needs {N} integers")))
}

/// Spatial side after each of the eight feature layers.
fn spatial_sizes(input: usize) -> [usize; 8] {
    let win = |n: usize, k: usize, s: usize, p: usize| ctbound_tensor::ops::window_output_size(n, k, s, p).unwrap_or(0);
    let a = win(input, 5, 4, 2);
    let b = win(a, 3, 2, 0);
    let c = win(b, 5, 1, 2);
    let d = win(c, 2, 2, 0);
    let e = win(d, 3, 1, 1);
    let f = win(e, 3, 1, 1);
    let g = win(f, 3, 1, 1);
    let h = win(g, 3, 2, 0);
    [a, b, c, d, e, f, g, h]
}

/// Initial output bias: vertex at the center, edges spread evenly.
pub const HEAD_BIAS: [f64; 5] = [0.0, 0.0, PI / 3.0, PI, 5.0 * PI / 3.0];

#[derive(Debug, Clone)]
pub struct InitStageModel {
    pub config: InitModelConfig,
    pub convs: Vec<Conv2d>,
    pub fcs: Vec<Linear>,
}

impl InitStageModel {
    pub fn new(config: InitModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.conv;
        let convs = vec![
            Conv2d::new(config.channels, c[0], 5, 4, 2, &mut rng),
            Conv2d::new(c[0], c[1], 5, 1, 2, &mut rng),
            Conv2d::new(c[1], c[2], 3, 1, 1, &mut rng),
            Conv2d::new(c[2], c[3], 3, 1, 1, &mut rng),
            Conv2d::new(c[3], c[4], 3, 1, 1, &mut rng),
        ];
        let last = spatial_sizes(config.upsample)[7];
        let flat = c[4] * last * last;
        let head = Linear::with_bound(config.fc[1], 5, 0.01 / (config.fc[1] as f64).sqrt(), &mut rng);
        head.bias.set_data(&HEAD_BIAS.map(|v| v as f32))?;
        let fcs = vec![Linear::he(flat, config.fc[0], &mut rng), Linear::he(config.fc[0], config.fc[1], &mut rng), head];
        Ok(InitStageModel { config, convs, fcs })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = Self::new(InitModelConfig::from_meta(&ckpt.meta)?, 0)?;
        ckpt.load_into(&model)?;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_module(self, self.config.to_meta())
    }

    /// `[B, k, U, U]` → `[B, 5]`, recording every intermediate shape.
    pub fn forward_traced(&self, x: &Tensor, trace: &mut Vec<Vec<usize>>) -> Result<Tensor> {
        let mut rec = |t: Tensor| {
            trace.push(t.shape().to_vec());
            t
        };
        let h = rec(self.convs[0].forward(x)?.relu());
        let h = rec(h.maxpool2d(3, 2)?);
        let h = rec(self.convs[1].forward(&h)?.relu());
        let h = rec(h.maxpool2d(2, 2)?);
        let h = rec(self.convs[2].forward(&h)?.relu());
        let h = rec(self.convs[3].forward(&h)?.relu());
        let h = rec(self.convs[4].forward(&h)?.relu());
        let h = rec(h.maxpool2d(3, 2)?);
        let b = h.shape()[0];
        let flat = h.reshape(&[b, h.numel() / b])?;
        let h = rec(self.fcs[0].forward(&flat)?.relu());
        let h = rec(self.fcs[1].forward(&h)?.relu());
        Ok(rec(self.fcs[2].forward(&h)?))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_traced(x, &mut Vec::new())
    }

    /// Network input for a batch of patches: each divided by `scale` and resized.
    pub fn input_tensor(&self, patches: &[&ColorField], scale: &[f64]) -> Result<Tensor> {
        let u = self.config.upsample;
        let k = self.config.channels;
        let mut data = Vec::with_capacity(patches.len() * k * u * u);
        for (p, &s) in patches.iter().zip(scale) {
            if p.channels != k || p.height != self.config.patch_size || p.width != self.config.patch_size {
                return Err(Error::InvalidInput(format!(
                    "patch {}x{}x{} does not match the model's {r}x{r}x{k}",
                    p.height,
                    p.width,
                    p.channels,
                    r = self.config.patch_size
                )));
            }
            data.extend(upsample_planes(p, u).into_iter().map(|v| (v / s) as f32));
        }
        Ok(Tensor::from_vec(data, &[patches.len(), k, u, u])?)
    }

    /// Raw `(x0, y0, φ1, φ2, φ3)` per patch, evaluated in chunks.
    pub fn predict_raw(&self, patches: &[&ColorField], scale: &[f64]) -> Result<Vec<[f64; 5]>> {
        let mut out = Vec::with_capacity(patches.len());
        for (chunk, sc) in patches.chunks(128).zip(scale.chunks(128)) {
            let y = self.forward(&self.input_tensor(chunk, sc)?)?;
            let data = y.data();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("init stage produced non-finite outputs".into()));
            }
            out.extend(data.chunks_exact(5).map(|r| std::array::from_fn(|i| r[i] as f64)));
        }
        Ok(out)
    }

    /// Junctions with canonical angles and wedge colors measured on each patch.
    pub fn predict(&self, patches: &[&ColorField], scale: &[f64]) -> Result<Vec<JunctionParams>> {
        let raw = self.predict_raw(patches, scale)?;
        raw.iter().zip(patches).map(|(r, p)| junction_from_raw(r, p)).collect()
    }
}

impl Module<f32> for InitStageModel {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit_params(&format!("{prefix}conv{i}"), f);
        }
        for (i, l) in self.fcs.iter().enumerate() {
            l.visit_params(&format!("{prefix}fc{i}"), f);
        }
    }
}

/// Canonical junction from raw geometry with colors estimated on `patch`.
pub fn junction_from_raw(raw: &[f64; 5], patch: &ColorField) -> Result<JunctionParams> {
    let (angles, _) = canonical_angles([raw[2], raw[3], raw[4]]);
    let vertex = (raw[0], raw[1]);
    Ok(JunctionParams { vertex, angles, colors: estimate_wedge_colors(patch, vertex, angles)? })
}

/// Bilinear resize of every channel to `u×u` with corners aligned, channel-major output.
pub fn upsample_planes(p: &ColorField, u: usize) -> Vec<f64> {
    let (h, w, k) = (p.height, p.width, p.channels);
    let mut out = vec![0.0; k * u * u];
    let coord = |i: usize, n: usize| -> (usize, usize, f64) {
        if u == 1 || n == 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (n - 1) as f64 / (u - 1) as f64;
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    for oy in 0..u {
        let (y0, y1, ty) = coord(oy, h);
        for ox in 0..u {
            let (x0, x1, tx) = coord(ox, w);
            for ch in 0..k {
                let v = |r: usize, c: usize| p.values[(r * w + c) * k + ch];
                let top = v(y0, x0) * (1.0 - tx) + v(y0, x1) * tx;
                let bot = v(y1, x0) * (1.0 - tx) + v(y1, x1) * tx;
                out[(ch * u + oy) * u + ox] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
    out
}
