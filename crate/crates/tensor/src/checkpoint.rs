//! Checkpoint files: a text manifest followed by one little-endian `f32` blob.
//!
//! ```text
//! schema = ctbound-checkpoint/1
//! dtype = f32
//! meta.<key> = <value>
//! param.<name> = <d0>x<d1>x... @ <byte offset>
//! blob_bytes = <total>
//! ---
//! <blob>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::nn::Module;
use crate::tensor::Tensor;

pub const SCHEMA: &str = "ctbound-checkpoint/1";
const SEPARATOR: &[u8] = b"---\n";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn from_module(module: &dyn Module<f32>, meta: BTreeMap<String, String>) -> Self {
        let params = module
            .named_params()
            .into_iter()
            .map(|(name, t)| (name, t.shape().to_vec(), t.to_vec()))
            .collect();
        Checkpoint { meta, params }
    }

    /// Copies stored values into a module with identical names and shapes.
    pub fn load_into(&self, module: &dyn Module<f32>) -> Result<()> {
        let stored: BTreeMap<&str, (&Vec<usize>, &Vec<f32>)> =
            self.params.iter().map(|(n, s, d)| (n.as_str(), (s, d))).collect();
        let wanted = module.named_params();
        if wanted.len() != stored.len() {
            return Err(bad(format!(
                "checkpoint has {} parameters, model expects {}",
                stored.len(),
                wanted.len()
            )));
        }
        for (name, t) in wanted {
            let (shape, data) = stored
                .get(name.as_str())
                .ok_or_else(|| bad(format!("missing parameter `{name}`")))?;
            if shape.as_slice() != t.shape() {
                return Err(bad(format!("parameter `{name}` has shape {shape:?}, model expects {:?}", t.shape())));
            }
            t.set_data(data)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        head.push_str(&format!("schema = {SCHEMA}\n"));
        head.push_str("dtype = f32\n");
        for (k, v) in &self.meta {
            head.push_str(&format!("meta.{k} = {v}\n"));
        }
        let mut offset = 0usize;
        for (name, shape, data) in &self.params {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            head.push_str(&format!("param.{name} = {} @ {offset}\n", dims.join("x")));
            offset += data.len() * 4;
        }
        head.push_str(&format!("blob_bytes = {offset}\n"));
        let mut out = head.into_bytes();
        out.extend_from_slice(SEPARATOR);
        for (_, _, data) in &self.params {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(SEPARATOR.len())
            .position(|w| w == SEPARATOR)
            .ok_or_else(|| bad("missing manifest separator"))?;
        let head = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("manifest is not UTF-8"))?;
        let blob = &bytes[split + SEPARATOR.len()..];
        let mut meta = BTreeMap::new();
        let mut entries = Vec::new();
        let mut schema = None;
        let mut blob_bytes = None;
        for line in head.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once(" = ").ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            if key == "schema" {
                schema = Some(value.to_string());
            } else if key == "dtype" {
                if value != "f32" {
                    return Err(bad(format!("unsupported dtype `{value}`")));
                }
            } else if key == "blob_bytes" {
                blob_bytes = Some(value.parse::<usize>().map_err(|_| bad("bad blob_bytes"))?);
            } else if let Some(k) = key.strip_prefix("meta.") {
                meta.insert(k.to_string(), value.to_string());
            } else if let Some(name) = key.strip_prefix("param.") {
                let (dims, offset) = value.split_once(" @ ").ok_or_else(|| bad(format!("malformed param `{name}`")))?;
                let shape = if dims.is_empty() {
                    vec![]
                } else {
                    dims.split('x')
                        .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape for `{name}`"))))
                        .collect::<Result<Vec<_>>>()?
                };
                let offset = offset.parse::<usize>().map_err(|_| bad(format!("bad offset for `{name}`")))?;
                entries.push((name.to_string(), shape, offset));
            } else {
                return Err(bad(format!("unknown manifest key `{key}`")));
            }
        }
        if schema.as_deref() != Some(SCHEMA) {
            return Err(bad(format!("unsupported schema {schema:?}")));
        }
        if blob_bytes != Some(blob.len()) {
            return Err(bad(format!("blob has {} bytes, manifest says {blob_bytes:?}", blob.len())));
        }
        let mut params = Vec::with_capacity(entries.len());
        for (name, shape, offset) in entries {
            let n: usize = shape.iter().product();
            let end = offset + n * 4;
            let chunk = blob.get(offset..end).ok_or_else(|| bad(format!("parameter `{name}` exceeds blob")))?;
            let data = chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            params.push((name, shape, data));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Parameter values of a module, for comparing two models bit for bit.
pub fn snapshot(module: &dyn Module<f32>) -> Vec<(String, Vec<f32>)> {
    module.named_params().into_iter().map(|(n, t): (String, Tensor<f32>)| (n, t.to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_restores_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Linear::<f32>::new(3, 4, &mut rng);
        let b = Linear::<f32>::new(3, 4, &mut rng);
        let mut meta = BTreeMap::new();
        meta.insert("stage".to_string(), "init".to_string());
        let bytes = Checkpoint::from_module(&a, meta.clone()).to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck.meta, meta);
        ck.load_into(&b).unwrap();
        assert_eq!(snapshot(&a), snapshot(&b));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Linear::<f32>::new(3, 4, &mut rng);
        let b = Linear::<f32>::new(4, 3, &mut rng);
        let ck = Checkpoint::from_module(&a, BTreeMap::new());
        let err = ck.load_into(&b).unwrap_err().to_string();
        assert!(err.contains("weight"), "{err}");
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Linear::<f32>::new(3, 4, &mut rng);
        let mut bytes = Checkpoint::from_module(&a, BTreeMap::new()).to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
