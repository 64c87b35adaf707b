//! AdamW with decoupled weight decay, bias correction, and a global-norm
//! gradient clip. Steps with non-finite gradients are skipped and counted.

use crate::tensor::DiffTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global-norm clip threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4, clip_norm: Some(1.0) }
    }
}

/// What one optimizer step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Non-finite gradient encountered; parameters and moments untouched.
    SkippedNonFinite,
}

/// Optimizer state over a fixed parameter list; moments are kept in
/// parameter order.
#[derive(Debug)]
pub struct AdamW {
    pub config: AdamConfig,
    /// First moments, one buffer per parameter.
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
    /// Completed update count (drives bias correction).
    pub t: usize,
    /// Steps skipped because of non-finite gradients.
    pub skipped: usize,
}

impl AdamW {
    pub fn new(params: &[(String, DiffTensor)], config: AdamConfig) -> Self {
        Self {
            config,
            m: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            t: 0,
            skipped: 0,
        }
    }

    /// One decoupled-decay update from the gradients currently held by
    /// the parameters. Missing gradients count as zero.
    pub fn step(&mut self, params: &[(String, DiffTensor)], lr: f64) -> StepOutcome {
        debug_assert_eq!(params.len(), self.m.len());
        let grads: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, p)| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
            .collect();

        if grads.iter().flatten().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return StepOutcome::SkippedNonFinite;
        }

        let clip_scale = match self.config.clip_norm {
            Some(max_norm) => {
                let norm_sq: f64 = grads.iter().flatten().map(|g| g * g).sum();
                let norm = norm_sq.sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, (_, p)) in params.iter().enumerate() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            p.with_data_mut(|data| {
                for j in 0..data.len() {
                    let gj = g[j] * clip_scale;
                    m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                    v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                    let m_hat = m[j] / bias1;
                    let v_hat = v[j] / bias2;
                    data[j] -= lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * data[j]);
                }
            });
        }
        StepOutcome::Applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(v: f64) -> Vec<(String, DiffTensor)> {
        vec![("p".to_string(), DiffTensor::param(vec![v], &[1]))]
    }

    #[test]
    fn zero_grad_zero_decay_leaves_parameter() {
        let params = single_param(0.7);
        let cfg = AdamConfig { weight_decay: 0.0, clip_norm: None, ..AdamConfig::default() };
        let mut opt = AdamW::new(&params, cfg);
        assert_eq!(opt.step(&params, 1e-3), StepOutcome::Applied);
        assert_eq!(params[0].1.to_vec(), vec![0.7]);
    }

    #[test]
    fn hand_unrolled_single_step() {
        // One scalar parameter, gradient 0.5, lr 0.01, defaults otherwise.
        let params = single_param(1.0);
        let loss = params[0].1.scale(0.5).sum();
        loss.backward().unwrap();
        let cfg = AdamConfig { weight_decay: 0.0, clip_norm: None, ..AdamConfig::default() };
        let mut opt = AdamW::new(&params, cfg);
        opt.step(&params, 0.01);

        let g = 0.5;
        let m = (1.0 - cfg.beta1) * g;
        let v = (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1);
        let v_hat = v / (1.0 - cfg.beta2);
        let expected = 1.0 - 0.01 * m_hat / (v_hat.sqrt() + cfg.eps);
        assert!((params[0].1.to_vec()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn decay_only_shrinks_magnitude_monotonically() {
        let params = single_param(2.0);
        let cfg = AdamConfig { weight_decay: 0.1, clip_norm: None, ..AdamConfig::default() };
        let mut opt = AdamW::new(&params, cfg);
        let mut prev = 2.0_f64;
        for _ in 0..20 {
            opt.step(&params, 0.05);
            let now = params[0].1.to_vec()[0];
            assert!(now.abs() < prev.abs());
            assert!(now > 0.0);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let params = single_param(1.0);
        let loss = params[0].1.scale(f64::NAN).sum();
        loss.backward().unwrap();
        let mut opt = AdamW::new(&params, AdamConfig::default());
        assert_eq!(opt.step(&params, 1e-3), StepOutcome::SkippedNonFinite);
        assert_eq!(opt.skipped, 1);
        assert_eq!(opt.t, 0);
        assert_eq!(params[0].1.to_vec(), vec![1.0]);
    }

    #[test]
    fn clipping_bounds_the_update_direction() {
        // A huge gradient gets rescaled to the clip norm before the
        // moment update.
        let params = single_param(0.0);
        let loss = params[0].1.scale(1e6).sum();
        loss.backward().unwrap();
        let cfg = AdamConfig { weight_decay: 0.0, clip_norm: Some(1.0), ..AdamConfig::default() };
        let mut opt = AdamW::new(&params, cfg);
        opt.step(&params, 0.01);
        // Clipped gradient is exactly 1.0, so m/v match the unit update.
        let got = params[0].1.to_vec()[0];
        let expected = -0.01 * 1.0 / (1.0 + cfg.eps);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }
}
