//! Per-image evaluation and summary reports.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::foj::JunctionParams;
use crate::grid::PatchGridSpec;

use super::distance::{edge_localization_error, EdgeError};
use super::quality::{color_map_quality, ColorQuality};
use super::select_boundaries;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.0, 0.1, 0.2];

/// Knobs shared by every evaluated image; echoed in report headers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub thresholds: [f64; 3],
    /// Boundary fields are binarized at this level before measuring distances.
    pub binarize: f64,
    /// Width of rendered edges, pixels.
    pub boundary_eps: f64,
    /// PSNR reference for color maps normalized by the photon level.
    pub peak: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { thresholds: DEFAULT_THRESHOLDS, binarize: 0.5, boundary_eps: 0.5, peak: 1.0 }
    }
}

impl EvalSettings {
    pub fn header(&self) -> String {
        format!(
            "# thresholds={:?} binarize={} boundary_eps={} peak={} (color maps normalized by photon level)",
            self.thresholds, self.binarize, self.boundary_eps, self.peak
        )
    }
}

/// Scores of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    /// `None` where the truth has no boundary at that threshold.
    pub edges: [Option<EdgeError>; 3],
    pub color: ColorQuality,
}

/// Scores one predicted params grid and color map against the truth.
///
/// `params` colors are in photon counts, `color` is normalized by `alpha`,
/// and `truth_masks[i]` holds the truth boundary at `settings.thresholds[i]`.
pub fn evaluate_image(
    params: &[JunctionParams],
    color: &ColorField,
    alpha: f64,
    grid: &PatchGridSpec,
    truth_masks: &[Vec<bool>; 3],
    truth_color: &ColorField,
    settings: &EvalSettings,
) -> Result<ImageEval> {
    let mut edges = [None; 3];
    for (i, &t) in settings.thresholds.iter().enumerate() {
        if !truth_masks[i].iter().any(|&m| m) {
            continue;
        }
        let field = select_boundaries(params, alpha, t, grid, settings.boundary_eps)?;
        edges[i] = Some(edge_localization_error(&field, &truth_masks[i], settings.binarize)?);
    }
    let color = color_map_quality(color, truth_color, settings.peak)?;
    Ok(ImageEval { edges, color })
}

/// One row of the comparison table: means over a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    /// Mean edge localization error per threshold over images with a
    /// non-empty prediction; NaN if there were none.
    pub d: [f64; 3],
    /// Images skipped per threshold because nothing was predicted.
    pub empty_predictions: [usize; 3],
    pub ssim: f64,
    pub psnr: f64,
    pub mse: f64,
    pub wall_seconds: f64,
    pub images: usize,
}

impl EvalReport {
    pub fn summarize(label: &str, evals: &[ImageEval], wall_seconds: f64) -> Result<Self> {
        if evals.is_empty() {
            return Err(Error::InvalidInput("no images to summarize".into()));
        }
        let mut d = [0.0; 3];
        let mut empty = [0usize; 3];
        for i in 0..3 {
            let mut sum = 0.0;
            let mut n = 0usize;
            for e in evals.iter().filter_map(|e| e.edges[i]) {
                if e.is_empty_prediction() {
                    empty[i] += 1;
                } else {
                    sum += e.mean;
                    n += 1;
                }
            }
            d[i] = if n == 0 { f64::NAN } else { sum / n as f64 };
        }
        let n = evals.len() as f64;
        let mse = evals.iter().map(|e| e.color.mse).sum::<f64>() / n;
        Ok(EvalReport {
            label: label.to_string(),
            d,
            empty_predictions: empty,
            ssim: evals.iter().map(|e| e.color.ssim).sum::<f64>() / n,
            psnr: evals.iter().map(|e| e.color.psnr).sum::<f64>() / n,
            mse,
            wall_seconds,
            images: evals.len(),
        })
    }

    pub fn csv_header(settings: &EvalSettings) -> String {
        let t = settings.thresholds;
        format!("method,D({}),D({}),D({}),SSIM,PSNR,MSE,wall_s,images,empty_predictions", t[0], t[1], t[2])
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.label,
            self.d[0],
            self.d[1],
            self.d[2],
            self.ssim,
            self.psnr,
            self.mse,
            self.wall_seconds,
            self.images,
            self.empty_predictions.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
        )
    }

    pub fn to_csv(reports: &[EvalReport], settings: &EvalSettings) -> String {
        let mut out = format!("{}\n{}\n", settings.header(), Self::csv_header(settings));
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// Fixed-width table in the same column order as the CSV.
    pub fn to_table(reports: &[EvalReport], settings: &EvalSettings) -> String {
        let t = settings.thresholds;
        let mut out = settings.header();
        out.push('\n');
        let heads = [
            "method".to_string(),
            format!("D({})", t[0]),
            format!("D({})", t[1]),
            format!("D({})", t[2]),
            "SSIM".into(),
            "PSNR(dB)".into(),
            "MSE".into(),
            "time(s)".into(),
        ];
        let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
        let _ = write!(out, "{:<width$}", heads[0]);
        for h in &heads[1..] {
            let _ = write!(out, " {h:>10}");
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "{:<width$}", r.label);
            for v in [r.d[0], r.d[1], r.d[2], r.ssim, r.psnr, r.mse, r.wall_seconds] {
                let _ = write!(out, " {v:>10.4}");
            }
            out.push('\n');
        }
        out
    }
}
