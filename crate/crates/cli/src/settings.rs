//! Flat `section.key = value` settings with per-key validation.
//!
//! A config file groups keys under `[section]` headers; `#` starts a comment.
//! Values from `--set` and dedicated flags override the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Int,
    Real,
    Bool,
    Choice(&'static [&'static str]),
    RealList,
    /// A real, or `auto`.
    RealOrAuto,
}

struct Key {
    name: &'static str,
    kind: Kind,
    /// `preset` means the value comes from the training preset.
    default: &'static str,
}

const PRESET: &str = "preset";

const fn key(name: &'static str, kind: Kind, default: &'static str) -> Key {
    Key { name, kind, default }
}

const KEYS: &[Key] = &[
    key("run.seed", Kind::Int, "0"),
    key("run.threads", Kind::Int, "1"),
    key("data.kind", Kind::Choice(&["patches", "composites"]), "patches"),
    key("data.count", Kind::Int, "100"),
    key("data.height", Kind::Int, "147"),
    key("data.width", Kind::Int, "147"),
    key("data.channels", Kind::Int, "1"),
    key("data.alpha_min", Kind::Real, "2"),
    key("data.alpha_max", Kind::Real, "10"),
    key("data.min_angle_gap_deg", Kind::Real, "10"),
    key("data.shapes_min", Kind::Int, "2"),
    key("data.shapes_max", Kind::Int, "4"),
    key("grid.patch_size", Kind::Int, "21"),
    key("grid.stride", Kind::Int, "3"),
    key("model.size", Kind::Choice(&["desk", "full"]), "desk"),
    key("train.preset", Kind::Choice(&["desk", "full"]), "desk"),
    key("train.epochs", Kind::Int, PRESET),
    key("train.batch_size", Kind::Int, PRESET),
    key("train.lr", Kind::Real, PRESET),
    key("train.lr_factor", Kind::Real, PRESET),
    key("train.lr_every", Kind::Int, PRESET),
    key("train.eps_delta", Kind::Real, PRESET),
    key("train.clip_norm", Kind::Real, PRESET),
    key("train.augment", Kind::Bool, PRESET),
    key("refine.batch_size", Kind::Int, PRESET),
    key("refine.phase1_epochs", Kind::Int, PRESET),
    key("refine.phase1_lr", Kind::Real, PRESET),
    key("refine.phase2_epochs", Kind::Int, PRESET),
    key("refine.phase2_lr_low", Kind::Real, PRESET),
    key("refine.phase2_lr_high", Kind::Real, PRESET),
    key("refine.half_period", Kind::Int, PRESET),
    key("refine.lambda_boundary", Kind::Real, "0.5"),
    key("refine.lambda_color", Kind::Real, "0.1"),
    key("refine.eps_delta", Kind::Real, "0.05"),
    key("refine.truth_restarts", Kind::Int, "2"),
    key("refine.truth_iterations", Kind::Int, "80"),
    key("solver.restarts", Kind::Int, "4"),
    key("solver.iterations", Kind::Int, "120"),
    key("solver.step", Kind::Real, "0.3"),
    key("solver.eps_start", Kind::Real, "0.5"),
    key("solver.eps_end", Kind::Real, "0.05"),
    key("solver.stages", Kind::Int, "4"),
    key("infer.alpha", Kind::RealOrAuto, "auto"),
    key("eval.thresholds", Kind::RealList, "0,0.1,0.2"),
    key("eval.boundary_eps", Kind::Real, "0.5"),
    key("eval.binarize", Kind::Real, "0.5"),
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

fn check_value(k: &Key, value: &str) -> Result<(), CliError> {
    let bad = || CliError::Config(format!("{}: invalid value {value:?}", k.name));
    match k.kind {
        Kind::Int => value.parse::<u64>().map(drop).map_err(|_| bad()),
        Kind::Real => value.parse::<f64>().ok().filter(|v| v.is_finite()).map(drop).ok_or_else(bad),
        Kind::Bool => value.parse::<bool>().map(drop).map_err(|_| bad()),
        Kind::Choice(opts) => opts.contains(&value).then_some(()).ok_or_else(|| {
            CliError::Config(format!("{}: expected one of {}, got {value:?}", k.name, opts.join("|")))
        }),
        Kind::RealList => parse_list(value).map(drop).ok_or_else(bad),
        Kind::RealOrAuto => (value == "auto" || value.parse::<f64>().is_ok_and(|v| v > 0.0))
            .then_some(())
            .ok_or_else(bad),
    }
}

fn parse_list(value: &str) -> Option<Vec<f64>> {
    value.split(',').map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect()
}

/// Explicitly set values; everything else resolves to defaults.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    set: BTreeMap<String, String>,
}

impl Settings {
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let k = lookup(name).ok_or_else(|| CliError::Config(format!("unknown setting {name:?}")))?;
        let value = value.trim();
        if k.default == PRESET && value == PRESET {
            self.set.remove(name);
            return Ok(());
        }
        check_value(k, value)?;
        self.set.insert(name.to_string(), value.to_string());
        Ok(())
    }

    /// `key=value` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {pair:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CliError::Config(format!("line {}: {m}", i + 1));
            if let Some(name) = line.strip_prefix('[') {
                section = name.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let k = k.trim();
            let full = if section.is_empty() || k.contains('.') { k.to_string() } else { format!("{section}.{k}") };
            s.set(&full, v).map_err(|e| err(e.to_string()))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Explicit value, or the default; `None` for unset preset-driven keys.
    pub fn raw(&self, name: &str) -> Option<&str> {
        let k = lookup(name).unwrap_or_else(|| panic!("setting {name} is not declared"));
        match self.set.get(name) {
            Some(v) => Some(v),
            None if k.default == PRESET => None,
            None => Some(k.default),
        }
    }

    pub fn int(&self, name: &str) -> usize {
        self.raw(name).and_then(|v| v.parse().ok()).unwrap_or_else(|| panic!("{name} has no value"))
    }

    pub fn real(&self, name: &str) -> f64 {
        self.raw(name).and_then(|v| v.parse().ok()).unwrap_or_else(|| panic!("{name} has no value"))
    }

    pub fn text(&self, name: &str) -> &str {
        self.raw(name).unwrap_or_else(|| panic!("{name} has no value"))
    }

    pub fn opt_real(&self, name: &str) -> Option<f64> {
        self.raw(name).and_then(|v| v.parse().ok())
    }

    pub fn opt_bool(&self, name: &str) -> Option<bool> {
        self.raw(name).and_then(|v| v.parse().ok())
    }

    pub fn list(&self, name: &str) -> Vec<f64> {
        parse_list(self.text(name)).expect("validated on set")
    }

    pub fn seed(&self) -> u64 {
        self.text("run.seed").parse().expect("validated on set")
    }

    /// Every key with its resolved value, grouped by section.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in KEYS {
            let (sec, name) = k.name.split_once('.').expect("dotted key");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let _ = writeln!(out, "{name} = {}", self.raw(k.name).unwrap_or(PRESET));
        }
        out
    }
}
