//! Adaptive-moment optimizer with decoupled weight decay, plus the two
//! learning-rate schedules the loops use.

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay. An optional mask restricts the update
/// (and the decay) to a trainable subset of the parameters.
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    weight_decay: f64,
    step: u64,
}

impl AdamW {
    pub fn new(param_len: usize, weight_decay: f64) -> AdamW {
        AdamW {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            weight_decay,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, mask: Option<&[bool]>) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - BETA1.powf(t);
        let bias2 = 1.0 - BETA2.powf(t);
        for i in 0..params.len() {
            if let Some(mask) = mask {
                if !mask[i] {
                    continue;
                }
            }
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + EPS) + self.weight_decay * params[i]);
        }
    }
}

/// Steps the base rate down by `decay` at each milestone epoch
/// (epochs are 1-based; a milestone m applies from epoch m on).
pub fn milestone_lr(base: f64, decay: f64, milestones: &[usize], epoch: usize) -> f64 {
    let hits = milestones.iter().filter(|&&m| epoch >= m).count() as i32;
    base * decay.powi(hits)
}

/// Cosine annealing from `base` toward zero across `total` epochs.
pub fn cosine_lr(base: f64, epoch: usize, total: usize) -> f64 {
    let progress = (epoch - 1) as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_descends_a_quadratic() {
        // f(x) = (x - 3)^2, df = 2(x-3)
        let mut opt = AdamW::new(1, 0.0);
        let mut x = [0.0f64];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &g, 0.05, None);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn mask_freezes_parameters() {
        let mut opt = AdamW::new(2, 0.01);
        let mut params = [1.0f64, 1.0];
        let grad = [1.0f64, 1.0];
        opt.step(&mut params, &grad, 0.1, Some(&[true, false]));
        assert_ne!(params[0], 1.0);
        assert_eq!(params[1], 1.0);
    }

    #[test]
    fn milestone_schedule_decays_at_the_listed_epochs() {
        let milestones = [60, 80];
        assert_eq!(milestone_lr(1e-4, 0.1, &milestones, 1), 1e-4);
        assert_eq!(milestone_lr(1e-4, 0.1, &milestones, 59), 1e-4);
        assert!((milestone_lr(1e-4, 0.1, &milestones, 60) - 1e-5).abs() < 1e-18);
        assert!((milestone_lr(1e-4, 0.1, &milestones, 99) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn cosine_schedule_starts_at_base_and_decays() {
        assert_eq!(cosine_lr(1e-3, 1, 100), 1e-3);
        let mid = cosine_lr(1e-3, 51, 100);
        assert!(mid < 1e-3 && mid > 0.0);
        let last = cosine_lr(1e-3, 100, 100);
        assert!(last < mid);
    }
}
