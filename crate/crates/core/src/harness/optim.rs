//! Adam with decoupled weight decay, global-norm clipping and a warmup plus
//! cosine learning-rate schedule.

use autograd::Tensor;

use crate::config::TrainConfig;
use crate::params::{ParamGroup, ParamSpec, Params};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Floor of the cosine decay, as a fraction of the peak rate.
pub const MIN_LR_FRACTION: f64 = 0.1;

/// Multiplier on the peak learning rate at `step` (0-based).
pub fn lr_scale(step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        return (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let t = ((step - warmup) as f64 / span as f64).min(1.0);
    MIN_LR_FRACTION + (1.0 - MIN_LR_FRACTION) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = (max_norm / norm) as f32;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Decay applies to matrices and kernels only, not to biases, norm gains or
/// embedding-free vectors.
fn decays(spec: &ParamSpec) -> bool {
    spec.shape.len() >= 2
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub t: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl AdamW {
    pub fn new(params: &Params<f32>) -> Self {
        let zeros = || params.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamW { t: 0, m: zeros(), v: zeros() }
    }

    /// One update. `scale` multiplies both group learning rates.
    pub fn step(&mut self, params: &mut Params<f32>, grads: &[Tensor<f32>], cfg: &TrainConfig, scale: f64) {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let specs: Vec<ParamSpec> = params.specs().to_vec();
        for (i, (spec, w)) in specs.iter().zip(params.values_mut()).enumerate() {
            let lr = scale * if spec.group == ParamGroup::Backbone { cfg.lr_backbone } else { cfg.lr_head };
            let wd = if decays(spec) { cfg.weight_decay } else { 0.0 };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &g), m), v) in w.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
                let g = g as f64;
                let mn = BETA1 * *m as f64 + (1.0 - BETA1) * g;
                let vn = BETA2 * *v as f64 + (1.0 - BETA2) * g * g;
                *m = mn as f32;
                *v = vn as f32;
                let upd = (mn / bc1) / ((vn / bc2).sqrt() + ADAM_EPS);
                let wv = *w as f64;
                *w = (wv - lr * (upd + wd * wv)) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Init, ParamLayout};

    #[test]
    fn schedule_shape() {
        assert!((lr_scale(0, 10, 100) - 0.1).abs() < 1e-12);
        assert!((lr_scale(9, 10, 100) - 1.0).abs() < 1e-12);
        assert!((lr_scale(10, 10, 100) - 1.0).abs() < 1e-12);
        assert!((lr_scale(100, 10, 100) - MIN_LR_FRACTION).abs() < 1e-12);
        assert!(lr_scale(50, 10, 100) < lr_scale(30, 10, 100));
        assert!((lr_scale(0, 0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![Tensor::new(&[2], vec![3.0f32, 4.0])];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-6 && (g[0].data()[1] - 0.8).abs() < 1e-6);
        assert!((clip_grad_norm(&mut g, 10.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut l = ParamLayout::new();
        l.add("w", &[1, 2], ParamGroup::Head, Init::Zeros);
        l.add("b", &[2], ParamGroup::Backbone, Init::Zeros);
        let mut p = Params::<f32>::init(&l, 0);
        let mut opt = AdamW::new(&p);
        let cfg = TrainConfig { lr_head: 0.1, lr_backbone: 0.01, weight_decay: 0.0, ..Default::default() };
        let grads = vec![Tensor::new(&[1, 2], vec![2.0, -0.5]), Tensor::new(&[2], vec![1.0, 0.0])];
        opt.step(&mut p, &grads, &cfg, 1.0);
        let w = p.by_name("w").unwrap().data();
        assert!((w[0] + 0.1).abs() < 1e-6 && (w[1] - 0.1).abs() < 1e-6);
        let b = p.by_name("b").unwrap().data();
        assert!((b[0] + 0.01).abs() < 1e-6 && b[1] == 0.0);
    }
}
