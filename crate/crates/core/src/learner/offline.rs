use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use super::objective::{
    accumulate_gradients, draw_cql_samples, td_targets, CqlTerm, MuMode, Objective,
};
use crate::error::{Error, Result};
use crate::networks::{QmixNet, TargetPair};
use crate::optim::{Adam, AdamConfig};
use crate::replay::Batch;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    /// Weight of the conservative penalty.
    pub alpha: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub sync_interval: u64,
    pub mu: MuMode,
    pub gamma: f64,
    pub adam: AdamConfig,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            batch_size: 32,
            steps: 5000,
            sync_interval: 200,
            mu: MuMode::default(),
            gamma: 0.99,
            adam: AdamConfig::default(),
        }
    }
}

impl OfflineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("cql weight {} must be >= 0", self.alpha)));
        }
        if self.batch_size == 0 || self.sync_interval == 0 {
            return Err(Error::Config("batch size and sync interval must be positive".into()));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OfflineMetrics {
    pub loss_td: f64,
    pub loss_cql: f64,
    pub loss: f64,
    pub q_mean: f64,
}

/// Paths and sha256 digests of the two exported networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineArtifacts {
    pub policy: PathBuf,
    pub policy_hash: String,
    pub offline_target: PathBuf,
    pub offline_target_hash: String,
}

pub const POLICY_FILE: &str = "policy.ckpt";
pub const OFFLINE_TARGET_FILE: &str = "offline_target.ckpt";

/// TD plus conservative-penalty learner.
#[derive(Debug, Clone)]
pub struct OfflineLearner {
    pub pair: TargetPair,
    pub adam: Adam,
    pub config: OfflineConfig,
    /// Stream used only for μ samples.
    pub cql_rng: ChaCha8Rng,
}

impl OfflineLearner {
    pub fn new(net: QmixNet, config: OfflineConfig, cql_rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(config.adam, &net.params)?;
        Ok(Self {
            pair: TargetPair::new(net, config.sync_interval)?,
            adam,
            config,
            cql_rng,
        })
    }

    /// One optimiser step on `L_td + α·L_cql`, then a target sync every
    /// `sync_interval` updates.
    pub fn update(&mut self, batch: &Batch) -> Result<OfflineMetrics> {
        let y = td_targets(&self.pair.target, batch, self.config.gamma)?;
        let samples = if self.config.alpha > 0.0 {
            Some(draw_cql_samples(
                &self.pair.live,
                batch,
                self.config.mu,
                &mut self.cql_rng,
            )?)
        } else {
            None
        };
        let objective = Objective {
            td_targets: Some(&y),
            memory: None,
            cql: samples.as_ref().map(|samples| CqlTerm {
                samples,
                alpha: self.config.alpha,
            }),
        };
        let terms = accumulate_gradients(&mut self.pair.live, batch, &objective)?;
        self.adam.step(&mut self.pair.live.params)?;
        self.pair.record_update();
        Ok(OfflineMetrics {
            loss_td: terms.fit,
            loss_cql: terms.cql,
            loss: terms.total,
            q_mean: terms.q_mean,
        })
    }

    /// Writes the live policy and the frozen offline target copy.
    pub fn export(&self, dir: &Path) -> Result<OfflineArtifacts> {
        let policy = dir.join(POLICY_FILE);
        let offline_target = dir.join(OFFLINE_TARGET_FILE);
        let policy_hash = self.pair.live.save(&policy)?;
        let offline_target_hash = self.pair.target.save(&offline_target)?;
        Ok(OfflineArtifacts {
            policy,
            policy_hash,
            offline_target,
            offline_target_hash,
        })
    }
}
