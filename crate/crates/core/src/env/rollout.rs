use rand::Rng;

use super::{AgentHistory, Env};
use crate::error::{Error, Result};
use crate::exploration::Explorer;
use crate::replay::{EpisodeRecord, FinalObservation, StepRecord};

/// How agent inputs are assembled from histories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub window: usize,
    pub agent_id: bool,
}

/// Anything that maps per-agent inputs to per-agent action values.
pub trait ActionValueSource {
    fn layout(&self) -> InputLayout;
    /// One input row per agent in, one value vector per agent out.
    fn action_values(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

/// Rolls out one episode from `env.reset(seed)` until termination or the
/// horizon, selecting actions through `explorer`.
pub fn run_episode<R: Rng + ?Sized>(
    env: &mut dyn Env,
    policy: &dyn ActionValueSource,
    explorer: &mut Explorer,
    rng: &mut R,
    seed: u64,
) -> Result<EpisodeRecord> {
    let spec = *env.spec();
    let layout = policy.layout();
    let mut histories: Vec<AgentHistory> = (0..spec.n_agents)
        .map(|_| AgentHistory::new(layout.window, spec.obs_dim, spec.action_dim))
        .collect();
    let mut current = env.reset(seed);
    for (h, o) in histories.iter_mut().zip(&current.obs) {
        h.push(o.clone(), None);
    }

    let mut steps = Vec::new();
    let mut success = false;
    loop {
        let inputs: Vec<Vec<f64>> = histories
            .iter()
            .enumerate()
            .map(|(i, h)| h.input(i, spec.n_agents, layout.agent_id))
            .collect();
        let values = policy.action_values(&inputs)?;
        if values.len() != spec.n_agents || values.iter().any(|v| v.len() != spec.action_dim) {
            return Err(Error::Config(format!(
                "policy produced {} value rows for {} agents with {} actions",
                values.len(),
                spec.n_agents,
                spec.action_dim
            )));
        }
        let selection = explorer.select(&values, &current.avail, rng)?;
        let outcome = env.step(&selection.actions)?;
        for (i, h) in histories.iter_mut().enumerate() {
            h.push(outcome.next.obs[i].clone(), Some(selection.actions[i]));
        }
        let trunc = outcome.truncated
            || (!outcome.terminated && steps.len() + 1 >= spec.horizon);
        steps.push(StepRecord {
            state: current.state,
            obs: current.obs,
            avail: current.avail,
            action: selection.actions,
            reward: outcome.reward,
            term: outcome.terminated,
            trunc,
        });
        success |= outcome.success;
        current = outcome.next;
        if outcome.terminated || trunc {
            break;
        }
    }
    let episode_return = steps.iter().map(|s| s.reward).sum();
    Ok(EpisodeRecord {
        seed,
        steps,
        last: FinalObservation {
            state: current.state,
            obs: current.obs,
            avail: current.avail,
        },
        episode_return,
        success,
    })
}
