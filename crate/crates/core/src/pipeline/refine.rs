//! Transformer stage: all junctions of an image refined jointly from their
//! parameters and grid positions.

use std::collections::BTreeMap;

use ctbound_tensor::{positional_grid, Checkpoint, Encoder, Linear, Module, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::init::meta_usize;
use crate::error::{Error, Result};
use crate::foj::JunctionParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub channels: usize,
    /// Vertex coordinates are divided by half of this before embedding.
    pub patch_size: usize,
}

impl RefineModelConfig {
    /// Full-size encoder.
    pub fn full(channels: usize) -> Self {
        RefineModelConfig { dim: 128, layers: 8, heads: 8, ff_dim: 256, channels, patch_size: 21 }
    }

    /// Small encoder for single-core training.
    pub fn desk(channels: usize) -> Self {
        RefineModelConfig { dim: 32, layers: 2, heads: 4, ff_dim: 64, channels, patch_size: 21 }
    }

    pub fn feature_len(&self) -> usize {
        5 + 3 * self.channels
    }

    fn to_meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("kind".into(), "refine".into());
        for (k, v) in [
            ("dim", self.dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
        ] {
            m.insert(k.into(), v.to_string());
        }
        m
    }

    fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        if meta.get("kind").map(String::as_str) != Some("refine") {
            return Err(Error::Config("checkpoint is not a refinement-stage model".into()));
        }
        Ok(RefineModelConfig {
            dim: meta_usize(meta, "dim")?,
            layers: meta_usize(meta, "layers")?,
            heads: meta_usize(meta, "heads")?,
            ff_dim: meta_usize(meta, "ff_dim")?,
            channels: meta_usize(meta, "channels")?,
            patch_size: meta_usize(meta, "patch_size")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RefineStageModel {
    pub config: RefineModelConfig,
    pub embed: Linear,
    pub encoder: Encoder,
    /// Emits a correction to the input geometry; starts at zero.
    pub head: Linear,
}

impl RefineStageModel {
    pub fn new(config: RefineModelConfig, seed: u64) -> Result<Self> {
        if config.dim == 0 || config.dim % 2 != 0 || config.channels == 0 || config.patch_size < 2 {
            return Err(Error::Config("refine model needs an even positive width and at least one channel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(RefineStageModel {
            embed: Linear::new(config.feature_len(), config.dim, &mut rng),
            encoder: Encoder::new(config.dim, config.layers, config.heads, config.ff_dim, &mut rng)?,
            head: Linear::zeros(config.dim, 5),
            config,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = Self::new(RefineModelConfig::from_meta(&ckpt.meta)?, 0)?;
        ckpt.load_into(&model)?;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_module(self, self.config.to_meta())
    }

    fn half(&self) -> f64 {
        (self.config.patch_size as f64 - 1.0) / 2.0
    }

    /// Per-patch feature rows: scaled vertex, canonical angles and colors
    /// divided by `scale`.
    pub fn features(&self, params: &[JunctionParams], scale: f64) -> Result<Tensor> {
        let k = self.config.channels;
        let h = self.half();
        let mut data = Vec::with_capacity(params.len() * self.config.feature_len());
        for p in params {
            if p.channels() != k {
                return Err(Error::InvalidInput(format!("junction has {} channels, model expects {k}", p.channels())));
            }
            data.extend([p.vertex.0 / h, p.vertex.1 / h, p.angles[0], p.angles[1], p.angles[2]].map(|v| v as f32));
            data.extend(p.colors.iter().flatten().map(|c| (c / scale) as f32));
        }
        Ok(Tensor::from_vec(data, &[params.len(), self.config.feature_len()])?)
    }

    /// Row-major positional encodings of a `rows×cols` grid.
    pub fn positions(&self, rows: usize, cols: usize) -> Result<Tensor> {
        let pe = positional_grid(rows, cols, self.config.dim)?;
        Ok(Tensor::from_vec(pe.into_iter().map(|v| v as f32).collect(), &[rows * cols, self.config.dim])?)
    }

    /// Geometry corrections `[N, 5]` from features and explicit positions.
    pub fn forward_with_positions(&self, features: &Tensor, positions: &Tensor) -> Result<Tensor> {
        let e = self.embed.forward(features)?.add(positions)?;
        Ok(self.head.forward(&self.encoder.forward(&e)?)?)
    }

    /// Refined raw geometry `[N, 5]`: input geometry plus the scaled correction.
    pub fn refine_tensor(&self, params: &[JunctionParams], scale: f64, rows: usize, cols: usize) -> Result<Tensor> {
        if params.len() != rows * cols {
            return Err(Error::InvalidInput(format!("{} junctions for a {rows}x{cols} grid", params.len())));
        }
        let delta = self.forward_with_positions(&self.features(params, scale)?, &self.positions(rows, cols)?)?;
        let h = self.half() as f32;
        let n = params.len();
        let gain = Tensor::from_vec([h, h, 1.0, 1.0, 1.0].repeat(n), &[n, 5])?;
        let base: Vec<f32> = params.iter().flat_map(|p| p.geometry_vector().map(|v| v as f32)).collect();
        Ok(delta.mul(&gain)?.add(&Tensor::from_vec(base, &[n, 5])?)?)
    }

    /// Refined raw geometry for a whole grid; reads no pixels.
    pub fn refine_geometry(&self, params: &[JunctionParams], scale: f64, rows: usize, cols: usize) -> Result<Vec<[f64; 5]>> {
        let out = self.refine_tensor(params, scale, rows, cols)?;
        let data = out.data();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("refinement stage produced non-finite outputs".into()));
        }
        Ok(data.chunks_exact(5).map(|r| std::array::from_fn(|i| r[i] as f64)).collect())
    }
}

impl Module<f32> for RefineStageModel {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.embed.visit_params(&format!("{prefix}embed"), f);
        self.encoder.visit_params(&format!("{prefix}encoder"), f);
        self.head.visit_params(&format!("{prefix}head"), f);
    }
}
