//! On-disk synthetic datasets.
//!
//! A dataset directory holds the sample files and `manifest.txt`: a
//! `[dataset]` section with the generator settings and a `[samples]` table
//! with one row per sample (index, seed, photon level, files with their
//! SHA-256, and for patches the true junction).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ctbound::foj::{render_patch_color, JunctionParams};
use ctbound::imageio::{load_image, load_photon, save_color16, save_photon, save_scalar16};
use ctbound::noise::{
    gen_composite_images, gen_patch_dataset, CompositeConfig, PatchDatasetConfig, PatchSample, PhotonImage,
};
use ctbound::{ColorField, ScalarField};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::settings::Settings;

pub const MANIFEST: &str = "manifest.txt";
pub const GENERATOR: &str = concat!("ctbound ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Patches,
    Composites,
}

impl Kind {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "patches" => Ok(Kind::Patches),
            "composites" => Ok(Kind::Composites),
            other => Err(CliError::Input(format!("unknown dataset kind {other:?}"))),
        }
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Empty or absent directories are fine; anything else needs `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.next().is_some();
        if non_empty {
            if !force {
                return Err(CliError::Config(format!("{} is not empty; pass --force to overwrite", dir.display())));
            }
            fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn patch_config(s: &Settings) -> PatchDatasetConfig {
    let mut c = PatchDatasetConfig::new(s.int("data.count"), s.int("grid.patch_size"), s.seed());
    c.channels = s.int("data.channels");
    c.alpha_range = (s.real("data.alpha_min"), s.real("data.alpha_max"));
    c.min_angle_gap = s.real("data.min_angle_gap_deg").to_radians();
    c
}

fn composite_config(s: &Settings) -> CompositeConfig {
    let mut c = CompositeConfig::new(s.int("data.count"), s.int("data.height"), s.int("data.width"), s.seed());
    c.channels = s.int("data.channels");
    c.alpha_range = (s.real("data.alpha_min"), s.real("data.alpha_max"));
    c.shapes = (s.int("data.shapes_min"), s.int("data.shapes_max"));
    c
}

/// Boundary pixels carry their local contrast (at least one 16-bit step), others 0.
pub fn edge_strength(mask: &[bool], contrast: &[f64], h: usize, w: usize) -> ScalarField {
    let v = mask.iter().zip(contrast).map(|(&m, &c)| if m { c.clamp(1.0 / 65535.0, 1.0) } else { 0.0 }).collect();
    ScalarField::from_vec(h, w, v).expect("sizes agree")
}

/// Generates the dataset described by `settings` into `dir`.
pub fn generate(settings: &Settings, dir: &Path) -> Result<usize, CliError> {
    let kind = Kind::parse(settings.text("data.kind"))?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "[dataset]\ngenerator = {GENERATOR}\nkind = {}", settings.text("data.kind"));
    for k in ["data.count", "data.channels", "data.alpha_min", "data.alpha_max", "run.seed"] {
        let _ = writeln!(manifest, "{} = {}", k.split_once('.').unwrap().1, settings.text(k));
    }
    match kind {
        Kind::Patches => {
            let _ = writeln!(manifest, "patch_size = {}", settings.int("grid.patch_size"));
            let _ = writeln!(manifest, "min_angle_gap_deg = {}", settings.text("data.min_angle_gap_deg"));
            let _ = writeln!(manifest, "\n[samples]\n# index seed alpha file sha256 x0 y0 phi1 phi2 phi3 colors");
            let samples = gen_patch_dataset(&patch_config(settings))?;
            for (i, s) in samples.iter().enumerate() {
                let name = format!("patch_{i:05}.ctb");
                save_photon(&s.noisy, &dir.join(&name))?;
                let t = &s.truth;
                let _ = write!(
                    manifest,
                    "{i} {} {} {name} {} {} {} {} {} {}",
                    s.seed,
                    s.noisy.alpha,
                    sha256_file(&dir.join(&name))?,
                    t.vertex.0,
                    t.vertex.1,
                    t.angles[0],
                    t.angles[1],
                    t.angles[2]
                );
                for c in t.colors.iter().flatten() {
                    let _ = write!(manifest, " {c}");
                }
                manifest.push('\n');
            }
        }
        Kind::Composites => {
            for k in ["data.height", "data.width", "data.shapes_min", "data.shapes_max"] {
                let _ = writeln!(manifest, "{} = {}", k.split_once('.').unwrap().1, settings.text(k));
            }
            let _ = writeln!(manifest, "\n[samples]\n# index seed alpha file sha256 clean sha256 edges sha256");
            let samples = gen_composite_images(&composite_config(settings))?;
            for (i, s) in samples.iter().enumerate() {
                let stem = format!("img_{i:05}");
                let files = [format!("{stem}.ctb"), format!("{stem}_clean.png"), format!("{stem}_edges.png")];
                save_photon(&s.noisy, &dir.join(&files[0]))?;
                save_color16(&s.clean, &dir.join(&files[1]))?;
                let edges = edge_strength(&s.mask, &s.contrast, s.clean.height, s.clean.width);
                save_scalar16(&edges, &dir.join(&files[2]))?;
                let _ = write!(manifest, "{i} {} {}", s.seed, s.noisy.alpha);
                for f in &files {
                    let _ = write!(manifest, " {f} {}", sha256_file(&dir.join(f))?);
                }
                manifest.push('\n');
            }
        }
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| CliError::io(&path, e))?;
    Ok(settings.int("data.count"))
}

/// Parsed manifest: header values and sample rows split into fields.
pub struct Manifest {
    pub dir: PathBuf,
    pub kind: Kind,
    pub header: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let mut header = Vec::new();
        let mut rows = Vec::new();
        let mut in_samples = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if line == "[samples]" {
                in_samples = true;
            } else if line.starts_with('[') {
                in_samples = false;
            } else if in_samples {
                rows.push(line.split_whitespace().map(String::from).collect());
            } else if let Some((k, v)) = line.split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let m = Manifest { dir: dir.to_path_buf(), kind: Kind::Patches, header, rows };
        let kind = Kind::parse(m.get("kind").ok_or_else(|| CliError::Input(format!("{}: no kind", path.display())))?)?;
        Ok(Manifest { kind, ..m })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn bad_row(&self, i: usize) -> CliError {
        CliError::Input(format!("{}: malformed sample row {i}", self.dir.join(MANIFEST).display()))
    }

    /// Single-junction samples with clean patches rendered from the stored truth.
    pub fn patch_samples(&self) -> Result<Vec<PatchSample>, CliError> {
        if self.kind != Kind::Patches {
            return Err(CliError::Input(format!("{} holds composites, not patches", self.dir.display())));
        }
        let k: usize = self.get("channels").and_then(|v| v.parse().ok()).unwrap_or(1);
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let nums: Option<Vec<f64>> = row.iter().skip(5).map(|t| t.parse().ok()).collect();
                let nums = nums.filter(|v| v.len() == 5 + 3 * k).ok_or_else(|| self.bad_row(i))?;
                let seed = row[1].parse().map_err(|_| self.bad_row(i))?;
                let noisy = load_photon(&self.dir.join(&row[3]))?;
                let colors = [0, 1, 2].map(|j| nums[5 + j * k..5 + (j + 1) * k].to_vec());
                let truth = JunctionParams { vertex: (nums[0], nums[1]), angles: [nums[2], nums[3], nums[4]], colors };
                let clean = render_patch_color(&truth, noisy.height);
                Ok(PatchSample { noisy, clean, truth, seed })
            })
            .collect()
    }

    /// `(stem, noisy image, clean image)` per composite.
    pub fn composites(&self) -> Result<Vec<(String, PhotonImage, ColorField)>, CliError> {
        if self.kind != Kind::Composites {
            return Err(CliError::Input(format!("{} holds patches, not composites", self.dir.display())));
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() < 7 {
                    return Err(self.bad_row(i));
                }
                let stem = row[3].trim_end_matches(".ctb").to_string();
                Ok((stem, load_photon(&self.dir.join(&row[3]))?, load_image(&self.dir.join(&row[5]))?))
            })
            .collect()
    }
}
