use super::EpisodeRecord;
use crate::env::InputLayout;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Valid steps of a set of episodes, flattened.
///
/// Agent rows are laid out step-major: row `s·N + i` is agent `i` at step
/// `s`. Only real steps are stored, so no padding mask is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n_agents: usize,
    pub action_dim: usize,
    pub inputs: Tensor,
    pub next_inputs: Tensor,
    pub states: Tensor,
    pub next_states: Tensor,
    pub actions: Vec<Vec<usize>>,
    pub avail: Vec<Vec<Vec<bool>>>,
    pub next_avail: Vec<Vec<Vec<bool>>>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
}

impl Batch {
    pub fn from_episodes(
        episodes: &[&EpisodeRecord],
        layout: InputLayout,
        action_dim: usize,
    ) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| Error::Usage("cannot build a batch from no episodes".into()))?;
        let n = first.n_agents();
        let state_dim = first.last.state.len();
        let total: usize = episodes.iter().map(|e| e.len()).sum();
        let mut inputs = Vec::new();
        let mut next_inputs = Vec::new();
        let mut states = Vec::with_capacity(total * state_dim);
        let mut next_states = Vec::with_capacity(total * state_dim);
        let mut actions = Vec::with_capacity(total);
        let mut avail = Vec::with_capacity(total);
        let mut next_avail = Vec::with_capacity(total);
        let mut rewards = Vec::with_capacity(total);
        let mut terminated = Vec::with_capacity(total);
        let mut in_dim = 0;
        for ep in episodes {
            if ep.n_agents() != n || ep.last.state.len() != state_dim {
                return Err(Error::Shape(format!(
                    "episode {} does not match batch dimensions",
                    ep.seed
                )));
            }
            // inputs at 0..=len are shared between consecutive steps
            let per_time: Vec<Vec<Vec<f64>>> = (0..=ep.len())
                .map(|t| {
                    (0..n)
                        .map(|i| ep.agent_input(t, i, layout.window, action_dim, layout.agent_id))
                        .collect()
                })
                .collect();
            in_dim = per_time[0][0].len();
            for (t, step) in ep.steps.iter().enumerate() {
                for i in 0..n {
                    inputs.extend_from_slice(&per_time[t][i]);
                    next_inputs.extend_from_slice(&per_time[t + 1][i]);
                }
                states.extend_from_slice(&step.state);
                next_states.extend_from_slice(ep.state_at(t + 1));
                actions.push(step.action.clone());
                avail.push(step.avail.clone());
                next_avail.push(ep.avail_at(t + 1).to_vec());
                rewards.push(step.reward);
                terminated.push(step.term);
            }
        }
        Ok(Self {
            n_agents: n,
            action_dim,
            inputs: Tensor::new(vec![total * n, in_dim], inputs)?,
            next_inputs: Tensor::new(vec![total * n, in_dim], next_inputs)?,
            states: Tensor::new(vec![total, state_dim], states)?,
            next_states: Tensor::new(vec![total, state_dim], next_states)?,
            actions,
            avail,
            next_avail,
            rewards,
            terminated,
        })
    }

    /// Number of valid steps.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}
