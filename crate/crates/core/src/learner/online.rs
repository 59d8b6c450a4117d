use rand_chacha::ChaCha8Rng;

use super::objective::{
    accumulate_gradients, chosen_q_tot, draw_cql_samples, ovm_target, td_targets, CqlTerm,
    MemoryTerm, MuMode, Objective,
};
use crate::error::{Error, Result};
use crate::exploration::Schedule;
use crate::networks::{QmixNet, TargetPair};
use crate::optim::{Adam, AdamConfig};
use crate::replay::Batch;

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub batch_size: usize,
    pub sync_interval: u64,
    pub gamma: f64,
    /// Memory weight λ as a function of environment steps.
    pub lambda: Schedule,
    /// Weight of an online conservative penalty; `None` disables it.
    pub cql_alpha: Option<f64>,
    pub mu: MuMode,
    pub adam: AdamConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            sync_interval: 200,
            gamma: 0.99,
            lambda: Schedule::new(1.0, 0.2, 10_000),
            cql_alpha: None,
            mu: MuMode::default(),
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OnlineMetrics {
    pub loss: f64,
    pub lambda: f64,
    pub q_mean: f64,
    /// Fraction of steps where the offline memory exceeded the TD target.
    pub mem_branch_fraction: f64,
}

/// Fine-tuning learner regressing onto the offline-memory target.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    pub pair: TargetPair,
    pub adam: Adam,
    /// Frozen offline target network; `None` means plain TD fine-tuning.
    pub memory: Option<QmixNet>,
    pub config: OnlineConfig,
    pub cql_rng: ChaCha8Rng,
    /// Steps on which the memory target broke its defining max law.
    pub ovm_violations: u64,
}

impl OnlineLearner {
    pub fn new(
        pair: TargetPair,
        memory: Option<QmixNet>,
        config: OnlineConfig,
        cql_rng: ChaCha8Rng,
    ) -> Result<Self> {
        if let Some(m) = &memory {
            if m.arch != pair.live.arch {
                return Err(Error::Config(
                    "offline target architecture differs from the live network".into(),
                ));
            }
            m.params.check_same_layout(&pair.live.params)?;
        } else if config.lambda.start != 0.0 || config.lambda.end != 0.0 {
            return Err(Error::Config(
                "a nonzero memory weight needs an offline target checkpoint".into(),
            ));
        }
        for v in [config.lambda.start, config.lambda.end] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("memory weight {v} outside [0, 1]")));
            }
        }
        config.adam.validate()?;
        let adam = Adam::new(config.adam, &pair.live.params)?;
        Ok(Self {
            pair,
            adam,
            memory,
            config,
            cql_rng,
            ovm_violations: 0,
        })
    }

    pub fn lambda_at(&self, t_env: u64) -> f64 {
        self.config.lambda.value(t_env)
    }

    /// One optimiser step at environment step `t_env`.
    pub fn update(&mut self, batch: &Batch, t_env: u64) -> Result<OnlineMetrics> {
        let lambda = self.lambda_at(t_env);
        let y = td_targets(&self.pair.target, batch, self.config.gamma)?;
        let mut mem_wins = 0usize;
        let ovm = match &self.memory {
            Some(frozen) => {
                let remembered = chosen_q_tot(frozen, batch)?;
                let targets: Vec<f64> = remembered
                    .iter()
                    .zip(&y)
                    .map(|(m, t)| {
                        let v = ovm_target(*m, *t);
                        if !(v >= *m && v >= *t && (v == *m || v == *t)) {
                            self.ovm_violations += 1;
                        }
                        if m > t {
                            mem_wins += 1;
                        }
                        v
                    })
                    .collect();
                Some(targets)
            }
            None => None,
        };
        let samples = match self.config.cql_alpha {
            Some(alpha) if alpha > 0.0 => Some((
                draw_cql_samples(&self.pair.live, batch, self.config.mu, &mut self.cql_rng)?,
                alpha,
            )),
            _ => None,
        };
        let objective = Objective {
            td_targets: Some(&y),
            memory: ovm.as_deref().map(|targets| MemoryTerm { targets, lambda }),
            cql: samples
                .as_ref()
                .map(|(samples, alpha)| CqlTerm { samples, alpha: *alpha }),
        };
        let terms = accumulate_gradients(&mut self.pair.live, batch, &objective)?;
        self.adam.step(&mut self.pair.live.params)?;
        self.pair.record_update();
        Ok(OnlineMetrics {
            loss: terms.total,
            lambda,
            q_mean: terms.q_mean,
            mem_branch_fraction: mem_wins as f64 / batch.len() as f64,
        })
    }
}
