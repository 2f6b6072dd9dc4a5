//! Training loops for both stages.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ctbound_tensor::{Adam, AdamConfig, Checkpoint, LrSchedule, Module, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::init::{junction_from_raw, InitModelConfig, InitStageModel};
use super::losses::{init_loss_op, ref1_loss_op, ref2_loss_op, Ref2Settings};
use super::refine::{RefineModelConfig, RefineStageModel};
use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::JunctionParams;
use crate::grid::{extract_patches, PatchGridSpec};
use crate::noise::{derive_seed, poisson_noise, PatchSample};
use crate::reconstruct::PhotonInput;
use crate::solver::{fit_patch, SolverConfig};

/// One optimization phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Smooth wedge width used by the reconstruction losses.
    pub eps_delta: f64,
    pub clip_norm: Option<f64>,
    /// Redraw the Poisson noise and apply a random flip or rotation to every
    /// patch each epoch.
    pub augment: bool,
}

impl TrainConfig {
    /// 900 epochs, batch 32, 2e-4 halved every 80 epochs.
    pub fn full_init() -> Self {
        TrainConfig {
            epochs: 900,
            batch_size: 32,
            schedule: LrSchedule::StepDecay { initial: 2e-4, factor: 0.5, every: 80 },
            seed: 0,
            eps_delta: 0.05,
            clip_norm: None,
            augment: false,
        }
    }

    /// 50 epochs of the desk-size network.
    pub fn desk_init() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            schedule: LrSchedule::StepDecay { initial: 1e-3, factor: 0.5, every: 20 },
            seed: 0,
            eps_delta: 0.3,
            clip_norm: Some(5.0),
            augment: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.eps_delta > 0.0) {
            return Err(Error::Config("smooth wedge width must be positive".into()));
        }
        Ok(())
    }
}

/// Two sequential phases: parameter supervision, then image reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrainConfig {
    pub phase1: TrainConfig,
    pub phase2: TrainConfig,
    pub loss: Ref2Settings,
}

impl RefineTrainConfig {
    /// 100 epochs at 5e-5, then 1600 epochs cycling between 1.75e-4 and 3.5e-4; batch 16.
    pub fn full() -> Self {
        let base = TrainConfig { epochs: 100, batch_size: 16, schedule: LrSchedule::Constant(5e-5), seed: 0, eps_delta: 0.05, clip_norm: None, augment: false };
        RefineTrainConfig {
            phase2: TrainConfig {
                epochs: 1600,
                schedule: LrSchedule::Triangular { low: 1.75e-4, high: 3.5e-4, half_period: 50 },
                ..base.clone()
            },
            phase1: base,
            loss: Ref2Settings::default(),
        }
    }

    pub fn desk() -> Self {
        let base = TrainConfig { epochs: 150, batch_size: 4, schedule: LrSchedule::Constant(1e-3), seed: 0, eps_delta: 0.05, clip_norm: Some(5.0), augment: false };
        RefineTrainConfig {
            phase2: TrainConfig {
                epochs: 4,
                schedule: LrSchedule::Triangular { low: 1e-4, high: 2e-4, half_period: 2 },
                ..base.clone()
            },
            phase1: base,
            loss: Ref2Settings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.phase1.validate()?;
        self.phase2.validate()?;
        let l = &self.loss;
        if l.lambda_boundary < 0.0 || l.lambda_color < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub phase: String,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("epoch,phase,lr,loss,wall_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.1}", r.epoch, r.phase, r.lr, r.loss, r.wall_ms);
    }
    out
}

#[derive(Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub log: Vec<LogRow>,
    /// `(epochs completed, snapshot)` at every learning-rate decay and at the end.
    pub checkpoints: Vec<(usize, Checkpoint)>,
    /// Set when a non-finite loss stopped training; the model then holds the
    /// last finite state.
    pub diverged: Option<String>,
}

fn save_checkpoint(dir: Option<&Path>, name: &str, ckpt: &Checkpoint) -> Result<()> {
    if let Some(d) = dir {
        ckpt.save(&d.join(name))?;
    }
    Ok(())
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64)));
    idx
}

/// Photon counts normalized by the photon level, as the network sees them.
fn normalized_noisy(s: &PatchSample) -> ColorField {
    s.noisy.normalized()
}

/// One of the eight symmetries of the square: `t & 1` transposes, `t & 2`
/// flips rows, `t & 4` flips columns.
pub fn dihedral(f: &ColorField, t: u8) -> ColorField {
    let (h, w, k) = (f.height, f.width, f.channels);
    let (oh, ow) = if t & 1 == 1 { (w, h) } else { (h, w) };
    let mut out = ColorField::zeros(oh, ow, k);
    for r in 0..oh {
        for c in 0..ow {
            let r2 = if t & 2 == 2 { oh - 1 - r } else { r };
            let c2 = if t & 4 == 4 { ow - 1 - c } else { c };
            let (sr, sc) = if t & 1 == 1 { (c2, r2) } else { (r2, c2) };
            out.pixel_mut(r, c).copy_from_slice(f.pixel(sr, sc));
        }
    }
    out
}

/// Fresh noisy input and matching clean target for one epoch.
fn augmented(s: &PatchSample, seed: u64) -> Result<(ColorField, ColorField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = dihedral(&s.clean, rng.random_range(0..8));
    let noisy = poisson_noise(&clean, s.noisy.alpha, rng.random())?;
    Ok((noisy.normalized(), clean))
}

/// Trains the convolutional stage on the patch reconstruction loss.
pub fn train_init(
    dataset: &[PatchSample],
    model_config: &InitModelConfig,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome<InitStageModel>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let model = InitStageModel::new(model_config.clone(), config.seed)?;
    let sources: Vec<ColorField> = dataset.iter().map(normalized_noisy).collect();
    let ones = vec![1.0; config.batch_size];
    let mut opt = Adam::new(model.named_params(), AdamConfig { clip_norm: config.clip_norm, ..Default::default() });
    let mut log = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::new();
    let mut last_good = model.to_checkpoint();
    let start = Instant::now();
    for epoch in 0..config.epochs {
        if config.schedule.is_boundary(epoch) {
            save_checkpoint(checkpoint_dir, &format!("init_epoch{epoch:05}.ckpt"), &last_good)?;
            checkpoints.push((epoch, last_good.clone()));
        }
        let lr = config.schedule.lr(epoch);
        let mut sum = 0.0;
        let mut batches = 0usize;
        let mut failure = None;
        for batch in epoch_order(dataset.len(), config.seed, epoch).chunks(config.batch_size) {
            let fresh: Vec<(ColorField, ColorField)> = if config.augment {
                let epoch_seed = derive_seed(config.seed ^ 0xA5A5, epoch as u64);
                batch.iter().map(|&i| augmented(&dataset[i], derive_seed(epoch_seed, i as u64))).collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let (src, tgt): (Vec<&ColorField>, Vec<&ColorField>) = if config.augment {
                fresh.iter().map(|(a, b)| (a, b)).unzip()
            } else {
                batch.iter().map(|&i| (&sources[i], &dataset[i].clean)).unzip()
            };
            let pred = model.forward(&model.input_tensor(&src, &ones[..batch.len()])?)?;
            let loss = init_loss_op(&pred, &src, &tgt, config.eps_delta)?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                failure = Some(format!("non-finite loss at epoch {epoch}"));
                break;
            }
            loss.backward()?;
            if let Err(e) = opt.step(lr) {
                failure = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            sum += value;
            batches += 1;
        }
        if let Some(msg) = failure {
            last_good.load_into(&model)?;
            return Ok(TrainOutcome { model, log, checkpoints, diverged: Some(msg) });
        }
        let row = LogRow { epoch, phase: "init".into(), lr, loss: sum / batches as f64, wall_ms: start.elapsed().as_secs_f64() * 1e3 };
        log.push(row);
        last_good = model.to_checkpoint();
    }
    save_checkpoint(checkpoint_dir, "init_final.ckpt", &last_good)?;
    checkpoints.push((config.epochs, last_good));
    Ok(TrainOutcome { model, log, checkpoints, diverged: None })
}

/// An image for training the refinement stage.
#[derive(Debug, Clone)]
pub struct RefineSample {
    pub input: PhotonInput,
    pub grid: PatchGridSpec,
    /// Per-patch target geometry, needed for the first phase.
    pub truth: Option<Vec<[f64; 5]>>,
}

/// Target for a patch with no boundary: the vertex sits above the patch and
/// every edge points away from it.
pub fn null_junction(patch_size: usize) -> [f64; 5] {
    let up = 1.5 * PI;
    [0.0, -(patch_size as f64), up - 0.5, up, up + 0.5]
}

/// Per-patch target geometry from a clean image: constant patches get
/// [`null_junction`], the rest a direct fit.
pub fn patch_truths(clean: &ColorField, grid: &PatchGridSpec, solver: &SolverConfig) -> Result<Vec<[f64; 5]>> {
    let patches = extract_patches(clean, grid)?;
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = &p.data.values;
            let k = p.data.channels;
            let flat = v.chunks_exact(k).all(|px| px.iter().zip(&v[..k]).all(|(a, b)| (a - b).abs() < 1e-12));
            if flat {
                return Ok(null_junction(grid.patch_size));
            }
            let cfg = SolverConfig { seed: derive_seed(solver.seed, i as u64), ..solver.clone() };
            let fit = fit_patch(&p.data, &cfg)?;
            Ok(fit.params.geometry_vector())
        })
        .collect()
}

/// Fixed inputs of one training image: init-stage junctions and the
/// normalized image.
pub struct PreparedImage {
    pub init: Vec<JunctionParams>,
    pub normalized: ColorField,
    pub scale: f64,
    pub grid: PatchGridSpec,
    pub truth: Option<Vec<[f64; 5]>>,
}

pub fn prepare_image(sample: &RefineSample, init: &InitStageModel) -> Result<PreparedImage> {
    let scale = sample.input.scale();
    let patches = extract_patches(&sample.input.image, &sample.grid)?;
    let refs: Vec<&ColorField> = patches.iter().map(|p| &p.data).collect();
    let raw = init.predict_raw(&refs, &vec![scale; refs.len()])?;
    let init_params = raw.iter().zip(&refs).map(|(r, p)| junction_from_raw(r, p)).collect::<Result<Vec<_>>>()?;
    Ok(PreparedImage {
        init: init_params,
        normalized: sample.input.image.map(|v| v / scale),
        scale,
        grid: sample.grid,
        truth: sample.truth.clone(),
    })
}

/// Trains the refinement stage on top of a frozen convolutional stage.
pub fn train_refine(
    samples: &[RefineSample],
    init: &InitStageModel,
    model_config: &RefineModelConfig,
    config: &RefineTrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome<RefineStageModel>> {
    let prepared = samples.iter().map(|s| prepare_image(s, init)).collect::<Result<Vec<_>>>()?;
    train_refine_prepared(&prepared, model_config, config, checkpoint_dir)
}

pub fn train_refine_prepared(
    images: &[PreparedImage],
    model_config: &RefineModelConfig,
    config: &RefineTrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome<RefineStageModel>> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if config.phase1.epochs > 0 && images.iter().any(|im| im.truth.is_none()) {
        return Err(Error::InvalidInput("parameter supervision needs per-patch truth for every image".into()));
    }
    let model = RefineStageModel::new(model_config.clone(), config.phase1.seed)?;
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut last_good = model.to_checkpoint();
    let start = Instant::now();
    for (phase, tc) in [("ref1", &config.phase1), ("ref2", &config.phase2)] {
        // A fresh optimizer per phase.
        let mut opt = Adam::new(model.named_params(), AdamConfig { clip_norm: tc.clip_norm, ..Default::default() });
        for epoch in 0..tc.epochs {
            let lr = tc.schedule.lr(epoch);
            let mut sum = 0.0;
            let mut failure = None;
            for batch in epoch_order(images.len(), tc.seed ^ phase.len() as u64, epoch).chunks(tc.batch_size) {
                let mut batch_loss = 0.0;
                for &i in batch {
                    let im = &images[i];
                    let out = model.refine_tensor(&im.init, im.scale, im.grid.rows(), im.grid.cols())?;
                    let loss: Tensor = if phase == "ref1" {
                        ref1_loss_op(&out, im.truth.as_ref().expect("checked above"))?
                    } else {
                        let norm = 1.0 / (im.grid.count() * im.grid.patch_size * im.grid.patch_size) as f64;
                        let s = Ref2Settings { eps_delta: tc.eps_delta, ..config.loss };
                        ref2_loss_op(&out, &im.normalized, &im.grid, &s, norm)?
                    };
                    let loss = loss.scale(1.0 / batch.len() as f32);
                    batch_loss += loss.item() as f64;
                    loss.backward()?;
                }
                if !batch_loss.is_finite() {
                    failure = Some(format!("non-finite loss in {phase} epoch {epoch}"));
                    break;
                }
                if let Err(e) = opt.step(lr) {
                    failure = Some(format!("{phase} epoch {epoch}: {e}"));
                    break;
                }
                sum += batch_loss * batch.len() as f64;
            }
            if let Some(msg) = failure {
                last_good.load_into(&model)?;
                return Ok(TrainOutcome { model, log, checkpoints, diverged: Some(msg) });
            }
            log.push(LogRow {
                epoch,
                phase: phase.into(),
                lr,
                loss: sum / images.len() as f64,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            last_good = model.to_checkpoint();
        }
        save_checkpoint(checkpoint_dir, &format!("refine_{phase}.ckpt"), &last_good)?;
        checkpoints.push((log.len(), last_good.clone()));
    }
    Ok(TrainOutcome { model, log, checkpoints, diverged: None })
}
