//! `ctbound`: dataset generation, training, inference and evaluation.

mod commands;
mod dataset;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{InferModels, Method, Stage};
use error::CliError;
use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "ctbound", version, about = "Boundary and color estimation for photon-limited images")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Settings file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set grid.stride=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long, value_enum)]
        kind: Option<DataKind>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
        /// Replace the contents of a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train the init or refine stage.
    Train {
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Trained init checkpoint; required for the refine stage.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Reconstruct boundary and color maps for one or more images (.ctb, .png, .pgm).
    Infer {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "ctbound")]
        method: MethodArg,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        refine: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        patch_size: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Photon level of PNG/PGM inputs; by default the 99th percentile sets the scale.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Score predictions against ground truth.
    Evaluate {
        /// `LABEL=DIR` of an `infer` output directory. Repeatable.
        #[arg(long = "pred", required = true, value_name = "LABEL=DIR")]
        preds: Vec<String>,
        /// Dataset directory holding `<stem>_clean.png` and `<stem>_edges.png`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Comma-separated contrast thresholds.
        #[arg(long)]
        thresholds: Option<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DataKind {
    Patches,
    Composites,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StageArg {
    Init,
    Refine,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Preset {
    Desk,
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Ctbound,
    Direct,
}

fn settings_from(common: &Common) -> Result<Settings, CliError> {
    let mut s = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for pair in &common.overrides {
        s.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        s.set("run.seed", &seed.to_string())?;
    }
    if let Some(t) = common.threads {
        s.set("run.threads", &t.to_string())?;
    }
    if s.int("run.threads") == 0 {
        return Err(CliError::Config("run.threads must be at least 1".into()));
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut s = settings_from(&cli.common)?;
    match cli.command {
        Command::GenData { kind, count, out, force } => {
            if let Some(k) = kind {
                s.set("data.kind", if matches!(k, DataKind::Patches) { "patches" } else { "composites" })?;
            }
            if let Some(c) = count {
                s.set("data.count", &c.to_string())?;
            }
            dataset::prepare_output_dir(&out, force)?;
            let n = dataset::generate(&s, &out)?;
            commands::write_file(&out.join(commands::SNAPSHOT), s.snapshot())?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train { stage, data, out, init, preset, epochs } => {
            if let Some(p) = preset {
                s.set("train.preset", if matches!(p, Preset::Full) { "full" } else { "desk" })?;
            }
            let stage = match stage {
                StageArg::Init => Stage::Init,
                StageArg::Refine => Stage::Refine,
            };
            if let Some(e) = epochs {
                let key = if stage == Stage::Init { "train.epochs" } else { "refine.phase1_epochs" };
                s.set(key, &e.to_string())?;
            }
            let loss = commands::train(&mut s, stage, &data, &out, init.as_deref())?;
            println!("final loss {loss:.6}; outputs in {}", out.display());
        }
        Command::Infer { inputs, method, init, refine, out, patch_size, stride, alpha } => {
            if let Some(r) = patch_size {
                s.set("grid.patch_size", &r.to_string())?;
            }
            if let Some(v) = stride {
                s.set("grid.stride", &v.to_string())?;
            }
            if let Some(a) = alpha {
                s.set("infer.alpha", &a.to_string())?;
            }
            let method = match method {
                MethodArg::Ctbound => Method::Ctbound,
                MethodArg::Direct => Method::Direct,
            };
            if method == Method::Ctbound && patch_size.is_some() {
                return Err(CliError::Config("--patch-size is fixed by the init checkpoint for method ctbound".into()));
            }
            let models = InferModels { init, refine };
            for line in commands::infer_images(&mut s, method, &inputs, &models, &out)? {
                println!("{line}");
            }
        }
        Command::Evaluate { preds, truth, out, thresholds } => {
            if let Some(t) = thresholds {
                s.set("eval.thresholds", &t)?;
            }
            let preds = preds
                .iter()
                .map(|p| {
                    p.split_once('=')
                        .map(|(l, d)| (l.to_string(), PathBuf::from(d)))
                        .ok_or_else(|| CliError::Config(format!("--pred expects LABEL=DIR, got {p:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", commands::evaluate(&s, &preds, &truth, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
