//! Adam with optional global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the joint gradient to this L2 norm when exceeded.
    pub grad_clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: Some(10.0),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First/second moment accumulators mirroring a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) first: Vec<Tensor>,
    pub(crate) second: Vec<Tensor>,
    pub(crate) steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    pub(crate) fn restore(&mut self, first: Vec<Tensor>, second: Vec<Tensor>, steps: u64) {
        self.first = first;
        self.second = second;
        self.steps = steps;
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(Error::Config("optimizer state does not match parameters".into()));
        }
        for (name, p) in params.iter() {
            if let Some(pos) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {name} is {} at index {pos}",
                    p.grad.data()[pos]
                )));
            }
        }
        let scale = match self.config.grad_clip {
            Some(max_norm) => {
                let norm = params
                    .iter()
                    .flat_map(|(_, p)| p.grad.data().iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.steps += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.steps as i32);
        let bias2 = 1.0 - beta2.powi(self.steps as i32);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let value = p.value.data_mut();
            for (j, g) in p.grad.data_mut().iter_mut().enumerate() {
                let g_scaled = *g * scale;
                m[j] = beta1 * m[j] + (1.0 - beta1) * g_scaled;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g_scaled * g_scaled;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
        params.bump_step();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("theta", Tensor::new(vec![1], vec![value]).unwrap())
            .unwrap();
        ps
    }

    fn unclipped() -> AdamConfig {
        AdamConfig {
            grad_clip: None,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_grads_leave_values_but_count_step() {
        let mut ps = single(1.25);
        let mut opt = Adam::new(unclipped(), &ps).unwrap();
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.flat_values(), vec![1.25]);
        assert_eq!(ps.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // m = 0.1·g, v = 0.001·g², m̂ = g, v̂ = g², Δ = lr·g/(|g|+eps)
        let mut ps = single(1.0);
        let id = ps.id("theta").unwrap();
        ps.grad_mut(id).data_mut()[0] = 0.5;
        let cfg = unclipped();
        let mut opt = Adam::new(cfg, &ps).unwrap();
        opt.step(&mut ps).unwrap();
        let m_hat = (0.1 * 0.5) / (1.0 - 0.9);
        let v_hat = (0.001 * 0.25) / (1.0 - 0.999);
        let expected = 1.0 - 5e-4 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((ps.flat_values()[0] - expected).abs() < 1e-15);
        assert!((ps.flat_values()[0] - (1.0 - 5e-4 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        assert_eq!(ps.grad(id).data(), &[0.0]);
    }

    #[test]
    fn constant_gradient_moves_opposite_sign() {
        let mut ps = single(0.0);
        let id = ps.id("theta").unwrap();
        let mut opt = Adam::new(unclipped(), &ps).unwrap();
        let mut trail = vec![0.0];
        for _ in 0..2 {
            ps.grad_mut(id).data_mut()[0] = -3.0;
            opt.step(&mut ps).unwrap();
            trail.push(ps.flat_values()[0]);
        }
        assert!(trail[1] > trail[0] && trail[2] > trail[1]);
    }

    #[test]
    fn non_finite_grad_names_parameter() {
        let mut ps = single(0.0);
        let id = ps.id("theta").unwrap();
        ps.grad_mut(id).data_mut()[0] = f64::NAN;
        let mut opt = Adam::new(unclipped(), &ps).unwrap();
        let err = opt.step(&mut ps).unwrap_err();
        assert!(matches!(&err, Error::NonFinite(msg) if msg.contains("theta")));
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let ps = single(0.0);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert!(Adam::new(cfg, &ps).is_err());
    }
}
