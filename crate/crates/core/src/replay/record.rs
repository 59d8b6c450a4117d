use serde::{Deserialize, Serialize};

use crate::env::history::{append_agent_id, encode_window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
    pub action: Vec<usize>,
    pub reward: f64,
    pub term: bool,
    pub trunc: bool,
}

/// Observation after the final step, needed to bootstrap truncated
/// episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalObservation {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub last: FinalObservation,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.last.obs.len()
    }

    /// Global state at time `t`, where `t == len()` is the final observation.
    pub fn state_at(&self, t: usize) -> &[f64] {
        if t == self.steps.len() {
            &self.last.state
        } else {
            &self.steps[t].state
        }
    }

    pub fn obs_at(&self, t: usize, agent: usize) -> &[f64] {
        if t == self.steps.len() {
            &self.last.obs[agent]
        } else {
            &self.steps[t].obs[agent]
        }
    }

    pub fn avail_at(&self, t: usize) -> &[Vec<bool>] {
        if t == self.steps.len() {
            &self.last.avail
        } else {
            &self.steps[t].avail
        }
    }

    /// Agent-network input at time `t` (0..=len), built exactly as during
    /// the rollout that produced this record.
    pub fn agent_input(
        &self,
        t: usize,
        agent: usize,
        window: usize,
        action_dim: usize,
        agent_id: bool,
    ) -> Vec<f64> {
        let obs_dim = self.last.obs[agent].len();
        let mut out = Vec::new();
        encode_window(
            &mut out,
            window,
            obs_dim,
            action_dim,
            t,
            |i| self.obs_at(i, agent),
            |i| (i > 0).then(|| self.steps[i - 1].action[agent]),
        );
        if agent_id {
            append_agent_id(&mut out, agent, self.n_agents());
        }
        out
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config(format!("episode {} has no steps", self.seed)));
        }
        if self.steps.len() > horizon {
            return Err(Error::Config(format!(
                "episode {} longer than horizon {horizon}",
                self.seed
            )));
        }
        let last = self.steps.len() - 1;
        for (t, s) in self.steps.iter().enumerate() {
            if t != last && (s.term || s.trunc) {
                return Err(Error::Config(format!(
                    "episode {} ends early at step {t}",
                    self.seed
                )));
            }
        }
        let total: f64 = self.steps.iter().map(|s| s.reward).sum();
        if total != self.episode_return {
            return Err(Error::Config(format!(
                "episode {} return {} differs from reward sum {total}",
                self.seed, self.episode_return
            )));
        }
        Ok(())
    }
}
