//! The `train`, `infer` and `evaluate` commands.

use std::fs;
use std::path::{Path, PathBuf};

use ctbound::imageio::{load_image, load_photon, save_color, save_scalar};
use ctbound::metrics::{evaluate_image, EvalReport, EvalSettings, ImageEval};
use ctbound::pipeline::{
    infer, log_csv, patch_truths, train_init, train_refine, InitModelConfig, InitStageModel, Ref2Settings,
    RefineModelConfig, RefineSample, RefineStageModel, RefineTrainConfig, TrainConfig,
};
use ctbound::reconstruct::{format_params_grid, parse_params_grid, PhotonInput, Reconstruction};
use ctbound::solver::{fit_image, SolverConfig};
use ctbound::PatchGridSpec;
use ctbound_tensor::{Checkpoint, LrSchedule};

use crate::dataset::Manifest;
use crate::error::CliError;
use crate::settings::Settings;

pub const SNAPSHOT: &str = "config.resolved";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file or directory", path.display())))
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Fills preset-driven keys with their resolved values so the snapshot is complete.
fn record(settings: &mut Settings, key: &str, value: impl ToString) -> Result<(), CliError> {
    if settings.raw(key).is_none() {
        settings.set(key, &value.to_string())?;
    }
    Ok(())
}

fn init_train_config(s: &mut Settings) -> Result<TrainConfig, CliError> {
    let mut c = match s.text("train.preset") {
        "full" => TrainConfig::full_init(),
        _ => TrainConfig::desk_init(),
    };
    let LrSchedule::StepDecay { initial, factor, every } = c.schedule else {
        unreachable!("init presets use step decay")
    };
    record(s, "train.epochs", c.epochs)?;
    record(s, "train.batch_size", c.batch_size)?;
    record(s, "train.lr", initial)?;
    record(s, "train.lr_factor", factor)?;
    record(s, "train.lr_every", every)?;
    record(s, "train.eps_delta", c.eps_delta)?;
    record(s, "train.clip_norm", c.clip_norm.unwrap_or(0.0))?;
    record(s, "train.augment", c.augment)?;
    c.epochs = s.int("train.epochs");
    c.batch_size = s.int("train.batch_size");
    c.schedule = LrSchedule::StepDecay {
        initial: s.real("train.lr"),
        factor: s.real("train.lr_factor"),
        every: s.int("train.lr_every"),
    };
    c.eps_delta = s.real("train.eps_delta");
    c.clip_norm = Some(s.real("train.clip_norm")).filter(|&v| v > 0.0);
    c.augment = s.opt_bool("train.augment").unwrap_or(false);
    c.seed = s.seed();
    c.validate()?;
    Ok(c)
}

fn refine_train_config(s: &mut Settings) -> Result<RefineTrainConfig, CliError> {
    let mut c = match s.text("train.preset") {
        "full" => RefineTrainConfig::full(),
        _ => RefineTrainConfig::desk(),
    };
    let (LrSchedule::Constant(lr1), LrSchedule::Triangular { low, high, half_period }) = (c.phase1.schedule, c.phase2.schedule)
    else {
        unreachable!("refine presets use a constant then a triangular rate")
    };
    record(s, "refine.batch_size", c.phase1.batch_size)?;
    record(s, "refine.phase1_epochs", c.phase1.epochs)?;
    record(s, "refine.phase1_lr", lr1)?;
    record(s, "refine.phase2_epochs", c.phase2.epochs)?;
    record(s, "refine.phase2_lr_low", low)?;
    record(s, "refine.phase2_lr_high", high)?;
    record(s, "refine.half_period", half_period)?;
    let batch = s.int("refine.batch_size");
    for phase in [&mut c.phase1, &mut c.phase2] {
        phase.batch_size = batch;
        phase.seed = s.seed();
        phase.eps_delta = s.real("refine.eps_delta");
    }
    c.phase1.epochs = s.int("refine.phase1_epochs");
    c.phase1.schedule = LrSchedule::Constant(s.real("refine.phase1_lr"));
    c.phase2.epochs = s.int("refine.phase2_epochs");
    c.phase2.schedule = LrSchedule::Triangular {
        low: s.real("refine.phase2_lr_low"),
        high: s.real("refine.phase2_lr_high"),
        half_period: s.int("refine.half_period"),
    };
    c.loss = Ref2Settings {
        lambda_boundary: s.real("refine.lambda_boundary"),
        lambda_color: s.real("refine.lambda_color"),
        eps_delta: s.real("refine.eps_delta"),
        boundary_eps: s.real("eval.boundary_eps"),
    };
    // Phase 1 needs per-patch targets; with zero epochs they are skipped.
    c.validate()?;
    Ok(c)
}

fn solver_config(s: &Settings) -> Result<SolverConfig, CliError> {
    let c = SolverConfig {
        restarts: s.int("solver.restarts"),
        iterations: s.int("solver.iterations"),
        step: s.real("solver.step"),
        eps_schedule: (s.real("solver.eps_start"), s.real("solver.eps_end")),
        stages: s.int("solver.stages"),
        seed: s.seed(),
    };
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Refine,
}

/// Trains one stage and writes its checkpoint, loss log and config snapshot to `out`.
/// Returns the final training loss.
pub fn train(settings: &mut Settings, stage: Stage, data: &Path, out: &Path, init: Option<&Path>) -> Result<f64, CliError> {
    require_exists(data)?;
    let init_path = match (stage, init) {
        (Stage::Refine, None) => {
            return Err(CliError::Config("stage refine needs a trained init checkpoint (--init)".into()))
        }
        (_, Some(p)) => {
            require_exists(p)?;
            Some(p)
        }
        (Stage::Init, None) => None,
    };
    let manifest = Manifest::load(data)?;
    ensure_dir(out)?;
    let full = settings.text("model.size") == "full";
    let outcome = match stage {
        Stage::Init => {
            let samples = manifest.patch_samples()?;
            let first = samples.first().ok_or_else(|| CliError::Input("dataset has no samples".into()))?;
            let k = first.noisy.channels;
            let mut model = if full { InitModelConfig::full(k) } else { InitModelConfig::desk(k) };
            model.patch_size = first.noisy.height;
            settings.set("grid.patch_size", &model.patch_size.to_string())?;
            let cfg = init_train_config(settings)?;
            write_file(&out.join(SNAPSHOT), settings.snapshot())?;
            let ckpt_dir = out.join("checkpoints");
            ensure_dir(&ckpt_dir)?;
            let o = train_init(&samples, &model, &cfg, Some(&ckpt_dir))?;
            o.model.to_checkpoint().save(&out.join("init.ckpt"))?;
            (o.log, o.diverged)
        }
        Stage::Refine => {
            let init = InitStageModel::from_checkpoint(&load_checkpoint(init_path.expect("checked"))?)?;
            let r = init.config.patch_size;
            settings.set("grid.patch_size", &r.to_string())?;
            let cfg = refine_train_config(settings)?;
            let solver = SolverConfig {
                restarts: settings.int("refine.truth_restarts"),
                iterations: settings.int("refine.truth_iterations"),
                seed: settings.seed(),
                ..SolverConfig::default()
            };
            write_file(&out.join(SNAPSHOT), settings.snapshot())?;
            let stride = settings.int("grid.stride");
            let mut samples = Vec::new();
            for (_, noisy, clean) in manifest.composites()? {
                let grid = PatchGridSpec::new(noisy.height, noisy.width, r, stride, noisy.channels)?;
                let truth = if cfg.phase1.epochs > 0 { Some(patch_truths(&clean, &grid, &solver)?) } else { None };
                samples.push(RefineSample { input: PhotonInput::from(&noisy), grid, truth });
            }
            let mut model = if full { RefineModelConfig::full(init.config.channels) } else { RefineModelConfig::desk(init.config.channels) };
            model.patch_size = r;
            let ckpt_dir = out.join("checkpoints");
            ensure_dir(&ckpt_dir)?;
            let o = train_refine(&samples, &init, &model, &cfg, Some(&ckpt_dir))?;
            o.model.to_checkpoint().save(&out.join("refine.ckpt"))?;
            (o.log, o.diverged)
        }
    };
    let (log, diverged) = outcome;
    write_file(&out.join("train_log.csv"), log_csv(&log))?;
    if let Some(msg) = diverged {
        return Err(CliError::Numeric(format!("{msg}; last finite weights saved")));
    }
    Ok(log.last().map_or(f64::NAN, |r| r.loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ctbound,
    Direct,
}

fn load_input(path: &Path, alpha: Option<f64>) -> Result<PhotonInput, CliError> {
    require_exists(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ctb")) {
        let p = load_photon(path)?;
        let mut input = PhotonInput::from(&p);
        if alpha.is_some() {
            input.alpha = alpha;
        }
        Ok(input)
    } else {
        Ok(PhotonInput::new(load_image(path)?, alpha))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

pub struct InferModels {
    pub init: Option<PathBuf>,
    pub refine: Option<PathBuf>,
}

/// Reconstructs every input and writes `<stem>_boundary.png`, `<stem>_color.png`,
/// `<stem>.params` and `<stem>_timing.txt`. Returns one timing line per input.
pub fn infer_images(
    settings: &mut Settings,
    method: Method,
    inputs: &[PathBuf],
    models: &InferModels,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("no input images given".into()));
    }
    for p in inputs.iter().chain(models.init.iter()).chain(models.refine.iter()) {
        require_exists(p)?;
    }
    let (init, refine) = match method {
        Method::Ctbound => {
            let path = models.init.as_ref().ok_or_else(|| CliError::Config("method ctbound needs --init".into()))?;
            let init = InitStageModel::from_checkpoint(&load_checkpoint(path)?)?;
            let refine = match &models.refine {
                Some(p) => Some(RefineStageModel::from_checkpoint(&load_checkpoint(p)?)?),
                None => None,
            };
            settings.set("grid.patch_size", &init.config.patch_size.to_string())?;
            (Some(init), refine)
        }
        Method::Direct => (None, None),
    };
    let solver = solver_config(settings)?;
    let alpha = settings.opt_real("infer.alpha");
    let eps = settings.real("eval.boundary_eps");
    let (r, stride) = (settings.int("grid.patch_size"), settings.int("grid.stride"));
    ensure_dir(out)?;
    write_file(&out.join(SNAPSHOT), settings.snapshot())?;
    let mut lines = Vec::new();
    for path in inputs {
        let input = load_input(path, alpha)?;
        let img = &input.image;
        if img.height < r || img.width < r {
            return Err(CliError::Input(format!(
                "{}: image {}x{} is smaller than the {r}x{r} patch",
                path.display(),
                img.height,
                img.width
            )));
        }
        let grid = PatchGridSpec::new(img.height, img.width, r, stride, img.channels)?;
        let rec = match &init {
            Some(m) => infer(&input, &grid, m, refine.as_ref(), eps)?.0,
            None => fit_image(&input, &grid, &solver, eps)?,
        };
        let name = stem(path);
        save_scalar(&rec.boundary, &out.join(format!("{name}_boundary.png")))?;
        save_color(&rec.color, &out.join(format!("{name}_color.png")))?;
        write_file(&out.join(format!("{name}.params")), format_params_grid(&grid, &rec.params, rec.scale))?;
        let line = rec.timing_line();
        write_file(&out.join(format!("{name}_timing.txt")), format!("{line}\n"))?;
        lines.push(format!("{name}: {line}"));
    }
    Ok(lines)
}

fn eval_settings(s: &Settings) -> Result<EvalSettings, CliError> {
    let t = s.list("eval.thresholds");
    let thresholds: [f64; 3] = t
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Config(format!("eval.thresholds needs exactly three values, got {}", t.len())))?;
    Ok(EvalSettings { thresholds, binarize: s.real("eval.binarize"), boundary_eps: s.real("eval.boundary_eps"), peak: 1.0 })
}

fn read_total_ms(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(path).ok()?;
    text.split_whitespace().find_map(|t| t.strip_prefix("total_ms=")).and_then(|v| v.parse().ok())
}

/// Scores every `<stem>.params` of each labelled prediction directory
/// against `<truth>/<stem>_clean.png` and `<stem>_edges.png`.
/// Writes `report.csv` and `report.txt` and returns the table.
pub fn evaluate(settings: &Settings, preds: &[(String, PathBuf)], truth: &Path, out: &Path) -> Result<String, CliError> {
    if preds.is_empty() {
        return Err(CliError::Config("no prediction directories given".into()));
    }
    require_exists(truth)?;
    for (_, d) in preds {
        require_exists(d)?;
    }
    let es = eval_settings(settings)?;
    let mut reports = Vec::new();
    for (label, dir) in preds {
        let mut stems: Vec<String> = fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".params")).map(String::from))
            .collect();
        stems.sort();
        if stems.is_empty() {
            return Err(CliError::Input(format!("{}: no .params files", dir.display())));
        }
        let mut evals: Vec<ImageEval> = Vec::new();
        let mut wall_ms = 0.0;
        for stem in &stems {
            let ppath = dir.join(format!("{stem}.params"));
            let text = fs::read_to_string(&ppath).map_err(|e| CliError::io(&ppath, e))?;
            let (grid, params, scale) = parse_params_grid(&text).map_err(|e| CliError::Input(format!("{}: {e}", ppath.display())))?;
            let clean = load_image(&truth.join(format!("{stem}_clean.png")))?;
            let edges = load_image(&truth.join(format!("{stem}_edges.png")))?;
            let dims = (grid.image_height, grid.image_width);
            if (clean.height, clean.width) != dims || (edges.height, edges.width) != dims || clean.channels != grid.channels {
                return Err(CliError::Input(format!(
                    "{stem}: prediction is {}x{}x{}, truth is {}x{}x{}",
                    dims.0, dims.1, grid.channels, clean.height, clean.width, clean.channels
                )));
            }
            let strength = &edges.values;
            let masks = es.thresholds.map(|t| strength.iter().map(|&e| e > 0.0 && e >= t).collect::<Vec<bool>>());
            let rec = Reconstruction::assemble(grid, params, scale, es.boundary_eps)?;
            evals.push(evaluate_image(&rec.params, &rec.color, scale, &grid, &masks, &clean, &es)?);
            wall_ms += read_total_ms(&dir.join(format!("{stem}_timing.txt"))).unwrap_or(0.0);
        }
        reports.push(EvalReport::summarize(label, &evals, wall_ms / 1e3)?);
    }
    ensure_dir(out)?;
    write_file(&out.join(SNAPSHOT), settings.snapshot())?;
    write_file(&out.join("report.csv"), EvalReport::to_csv(&reports, &es))?;
    let table = EvalReport::to_table(&reports, &es);
    write_file(&out.join("report.txt"), &table)?;
    Ok(table)
}
