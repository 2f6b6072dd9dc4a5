//! Whole-image inference with the learned stages.

use std::time::Instant;

use super::init::{junction_from_raw, InitStageModel};
use super::refine::RefineStageModel;
use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::grid::{extract_patches, PatchGridSpec};
use crate::reconstruct::{PhotonInput, Reconstruction};

/// Model evaluations performed by one call to [`infer`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferCounters {
    pub init_patch_evals: usize,
    pub encoder_passes: usize,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the convolutional stage on every patch and, when given, one pass of
/// the refinement stage over the whole grid.
pub fn infer(
    input: &PhotonInput,
    grid: &PatchGridSpec,
    init: &InitStageModel,
    refine: Option<&RefineStageModel>,
    boundary_eps: f64,
) -> Result<(Reconstruction, InferCounters)> {
    if init.config.patch_size != grid.patch_size || init.config.channels != grid.channels {
        return Err(Error::Config(format!(
            "init model expects {r}x{r} patches with {k} channels, grid has {}x{} with {}",
            grid.patch_size,
            grid.patch_size,
            grid.channels,
            r = init.config.patch_size,
            k = init.config.channels
        )));
    }
    if let Some(m) = refine {
        if m.config.patch_size != grid.patch_size || m.config.channels != grid.channels {
            return Err(Error::Config("refine model does not match the patch grid".into()));
        }
    }
    let scale = input.scale();
    let mut counters = InferCounters::default();
    let mut timings = Vec::new();

    let t = Instant::now();
    let patches = extract_patches(&input.image, grid)?;
    let refs: Vec<&ColorField> = patches.iter().map(|p| &p.data).collect();
    timings.push(("extract".to_string(), ms_since(t)));

    let t = Instant::now();
    let mut params = init.predict(&refs, &vec![scale; refs.len()])?;
    counters.init_patch_evals = refs.len();
    timings.push(("init".to_string(), ms_since(t)));

    if let Some(m) = refine {
        let t = Instant::now();
        let raw = m.refine_geometry(&params, scale, grid.rows(), grid.cols())?;
        counters.encoder_passes += 1;
        params = raw.iter().zip(&refs).map(|(r, p)| junction_from_raw(r, p)).collect::<Result<_>>()?;
        timings.push(("refine".to_string(), ms_since(t)));
    }

    let t = Instant::now();
    let mut rec = Reconstruction::assemble(*grid, params, scale, boundary_eps)?;
    timings.push(("aggregate".to_string(), ms_since(t)));
    rec.timings = timings;
    Ok((rec, counters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{InitModelConfig, RefineModelConfig};

    fn tiny_init(r: usize) -> InitStageModel {
        let cfg = InitModelConfig { patch_size: r, upsample: 49, channels: 1, conv: [4, 4, 4, 4, 4], fc: [8, 8] };
        InitStageModel::new(cfg, 1).unwrap()
    }

    #[test]
    fn counts_one_encoder_pass() {
        let img = ColorField::from_vec(13, 13, 1, (0..169).map(|i| (i % 7) as f64).collect()).unwrap();
        let grid = PatchGridSpec::new(13, 13, 5, 2, 1).unwrap();
        let init = tiny_init(5);
        let refine = RefineModelConfig { dim: 8, layers: 1, heads: 2, ff_dim: 8, channels: 1, patch_size: 5 };
        let refine = RefineStageModel::new(refine, 0).unwrap();
        let input = PhotonInput::new(img, Some(6.0));
        let (rec, c) = infer(&input, &grid, &init, Some(&refine), 0.5).unwrap();
        assert_eq!(c, InferCounters { init_patch_evals: grid.count(), encoder_passes: 1 });
        let names: Vec<&str> = rec.timings.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["extract", "init", "refine", "aggregate"]);

        // An untrained refinement stage is the identity.
        let (plain, c) = infer(&input, &grid, &init, None, 0.5).unwrap();
        assert_eq!(c.encoder_passes, 0);
        for (a, b) in plain.params.iter().zip(&rec.params) {
            assert!((a.vertex.0 - b.vertex.0).abs() < 1e-4 && (a.angles[1] - b.angles[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_mismatched_model() {
        let img = ColorField::zeros(13, 13, 1);
        let grid = PatchGridSpec::new(13, 13, 7, 2, 1).unwrap();
        let err = infer(&PhotonInput::new(img, None), &grid, &tiny_init(5), None, 0.5).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
