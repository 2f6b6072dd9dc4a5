//! Central finite-difference gradient checking in 64-bit.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// (input index, element index) of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Magnitudes below this are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-6, floor: 1e-6 }
    }
}

/// Compares back-propagated gradients of the scalar `f(inputs)` with central
/// differences. Every input must be a leaf created with [`Tensor::param`].
pub fn gradcheck<F>(inputs: &[Tensor<f64>], f: F, config: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    for t in inputs {
        t.zero_grad();
    }
    let out = f(inputs)?;
    if out.numel() != 1 {
        return Err(TensorError::Shape {
            op: "gradcheck",
            detail: format!("function must return a scalar, got {:?}", out.shape()),
        });
    }
    out.backward()?;
    drop(out);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (i, t) in inputs.iter().enumerate() {
        let analytic = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        let base = t.to_vec();
        for j in 0..base.len() {
            let mut probe = base.clone();
            probe[j] = base[j] + config.step;
            t.set_data(&probe)?;
            let plus = f(inputs)?.item();
            probe[j] = base[j] - config.step;
            t.set_data(&probe)?;
            let minus = f(inputs)?.item();
            t.set_data(&base)?;
            let numeric = (plus - minus) / (2.0 * config.step);
            let denom = analytic[j].abs().max(numeric.abs()).max(config.floor);
            let rel = (analytic[j] - numeric).abs() / denom;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = (i, j);
            }
            report.checked += 1;
        }
        t.zero_grad();
    }
    Ok(report)
}
