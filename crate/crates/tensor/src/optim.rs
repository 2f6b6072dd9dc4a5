//! Adam and learning-rate schedules.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the joint gradient to at most this L2 norm before the update.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Adam with bias correction over a fixed list of named parameters.
pub struct Adam<T: Element = f32> {
    pub config: AdamConfig,
    params: Vec<(String, Tensor<T>)>,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl<T: Element> Adam<T> {
    pub fn new(params: Vec<(String, Tensor<T>)>, config: AdamConfig) -> Self {
        let first = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let second = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            config,
            params,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    /// Applies one update with learning rate `lr` and clears the gradients.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, lr: f64) -> Result<()> {
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.params.len());
        let mut norm_sq = 0.0;
        for (name, p) in &self.params {
            let g = p.grad_ref().as_ref().map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<f64>>());
            if let Some(g) = &g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFiniteGradient { param: name.clone() });
                }
                norm_sq += g.iter().map(|v| v * v).sum::<f64>();
            }
            grads.push(g);
        }
        let clip = match self.config.clip_norm {
            Some(max) if norm_sq.sqrt() > max => max / norm_sq.sqrt(),
            _ => 1.0,
        };
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (_, p)) in self.params.iter().enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let g = grads[i].as_deref();
            p.update_data(|data| {
                for j in 0..data.len() {
                    let gj = g.map_or(0.0, |g| g[j] * clip);
                    m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                    let update = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                    data[j] -= T::from_f64_lossy(update);
                }
            });
            p.zero_grad();
        }
        Ok(())
    }

    /// Forgets the moment estimates and step count.
    pub fn reset(&mut self) {
        self.first.iter_mut().for_each(|m| m.fill(0.0));
        self.second.iter_mut().for_each(|v| v.fill(0.0));
        self.step = 0;
    }
}

/// Learning rate as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `initial · factor^(epoch / every)`.
    StepDecay { initial: f64, factor: f64, every: usize },
    /// Linear ramp from `low` to `high` over `half_period` epochs and back.
    Triangular { low: f64, high: f64, half_period: usize },
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::StepDecay { initial, factor, every } => {
                initial * factor.powi((epoch / every.max(1)) as i32)
            }
            LrSchedule::Triangular { low, high, half_period } => {
                let hp = half_period.max(1);
                let pos = epoch % (2 * hp);
                let t = if pos <= hp { pos as f64 / hp as f64 } else { (2 * hp - pos) as f64 / hp as f64 };
                low + (high - low) * t
            }
        }
    }

    /// Epochs at which a step-decay schedule changes rate.
    pub fn is_boundary(&self, epoch: usize) -> bool {
        match *self {
            LrSchedule::StepDecay { every, .. } => epoch > 0 && epoch % every.max(1) == 0,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let p = Tensor::<f32>::param(vec![1.0, -2.0], &[2]).unwrap();
        let mut adam = Adam::new(vec![("p".into(), p.clone())], AdamConfig::default());
        p.scale(0.0).sum().backward().unwrap();
        adam.step(0.1).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let p = Tensor::<f64>::param(vec![0.0], &[1]).unwrap();
        let mut adam = Adam::new(vec![("p".into(), p.clone())], AdamConfig::default());
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..500 {
            let before = p.item();
            p.scale(3.0).sum().backward().unwrap();
            adam.step(lr).unwrap();
            last = before - p.item();
        }
        assert!((last - lr).abs() < 1e-6, "update {last}");
    }

    #[test]
    fn quadratic_converges() {
        // f(x) = (x - 3)^2 minimized by x = 3.
        let p = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
        let mut adam = Adam::new(vec![("x".into(), p.clone())], AdamConfig::default());
        let target = Tensor::from_vec(vec![3.0], &[1]).unwrap();
        for _ in 0..2000 {
            let d = p.sub(&target).unwrap();
            d.mul(&d).unwrap().sum().backward().unwrap();
            adam.step(0.01).unwrap();
        }
        assert!((p.item() - 3.0).abs() < 1e-4, "x = {}", p.item());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let p = Tensor::<f32>::param(vec![1.0], &[1]).unwrap();
        let mut adam = Adam::new(vec![("layer.w".into(), p.clone())], AdamConfig::default());
        p.scale(f32::INFINITY).sum().backward().unwrap();
        match adam.step(0.1) {
            Err(TensorError::NonFiniteGradient { param }) => assert_eq!(param, "layer.w"),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn step_decay_halves_every_80() {
        let s = LrSchedule::StepDecay { initial: 2e-4, factor: 0.5, every: 80 };
        assert_eq!(s.lr(0), 2e-4);
        assert_eq!(s.lr(79), 2e-4);
        assert_eq!(s.lr(80), 1e-4);
        assert_eq!(s.lr(160), 5e-5);
        assert!(s.is_boundary(80) && !s.is_boundary(81));
    }

    #[test]
    fn triangular_cycle_endpoints_and_peak() {
        let s = LrSchedule::Triangular { low: 1.75e-4, high: 3.5e-4, half_period: 10 };
        assert_eq!(s.lr(0), 1.75e-4);
        assert_eq!(s.lr(10), 3.5e-4);
        assert_eq!(s.lr(20), 1.75e-4);
        assert!((s.lr(5) - 2.625e-4).abs() < 1e-18);
    }
}
