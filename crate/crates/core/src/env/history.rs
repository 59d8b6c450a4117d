use std::collections::VecDeque;

/// Width of an agent-network input: `k·(obs + actions)` plus an optional
/// one-hot agent id.
pub fn agent_input_dim(
    obs_dim: usize,
    action_dim: usize,
    window: usize,
    n_agents: usize,
    agent_id: bool,
) -> usize {
    window * (obs_dim + action_dim) + if agent_id { n_agents } else { 0 }
}

/// Appends the window encoding ending at time `t`, most recent entry first.
/// Entry `j` is `obs(t - j) ++ onehot(prev_action(t - j))`; entries before
/// the episode start are all zeros.
pub(crate) fn encode_window<'a>(
    out: &mut Vec<f64>,
    window: usize,
    obs_dim: usize,
    action_dim: usize,
    t: usize,
    obs: impl Fn(usize) -> &'a [f64],
    prev_action: impl Fn(usize) -> Option<usize>,
) {
    for j in 0..window {
        if j <= t {
            let idx = t - j;
            let o = obs(idx);
            debug_assert_eq!(o.len(), obs_dim);
            out.extend_from_slice(o);
            let start = out.len();
            out.resize(start + action_dim, 0.0);
            if let Some(a) = prev_action(idx) {
                out[start + a] = 1.0;
            }
        } else {
            out.resize(out.len() + obs_dim + action_dim, 0.0);
        }
    }
}

pub(crate) fn append_agent_id(out: &mut Vec<f64>, agent: usize, n_agents: usize) {
    let start = out.len();
    out.resize(start + n_agents, 0.0);
    out[start + agent] = 1.0;
}

/// Ring of the last `k` (observation, previous action) pairs of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    window: usize,
    obs_dim: usize,
    action_dim: usize,
    entries: VecDeque<(Vec<f64>, Option<usize>)>,
}

impl AgentHistory {
    pub fn new(window: usize, obs_dim: usize, action_dim: usize) -> Self {
        assert!(window >= 1, "history window must be at least 1");
        Self {
            window,
            obs_dim,
            action_dim,
            entries: VecDeque::with_capacity(window),
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Records the observation at a new step together with the action taken
    /// at the previous step (`None` at episode start).
    pub fn push(&mut self, obs: Vec<f64>, prev_action: Option<usize>) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back((obs, prev_action));
    }

    /// Zero-padded window of length exactly `k`, plus the agent id when set.
    pub fn input(&self, agent: usize, n_agents: usize, agent_id: bool) -> Vec<f64> {
        let mut out = Vec::new();
        let len = self.entries.len();
        if len == 0 {
            out.resize(self.window * (self.obs_dim + self.action_dim), 0.0);
        } else {
            // present the ring as a sequence ending at time len-1
            encode_window(
                &mut out,
                self.window,
                self.obs_dim,
                self.action_dim,
                len - 1,
                |i| self.entries[i].0.as_slice(),
                |i| self.entries[i].1,
            );
        }
        if agent_id {
            append_agent_id(&mut out, agent, n_agents);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_to_window_at_episode_start() {
        let mut h = AgentHistory::new(3, 2, 2);
        h.push(vec![0.5, 0.25], None);
        let x = h.input(1, 3, true);
        assert_eq!(x.len(), agent_input_dim(2, 2, 3, 3, true));
        assert_eq!(&x[..4], &[0.5, 0.25, 0.0, 0.0]);
        assert!(x[4..12].iter().all(|v| *v == 0.0));
        assert_eq!(&x[12..], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn ring_keeps_last_k_most_recent_first() {
        let mut h = AgentHistory::new(2, 1, 2);
        h.push(vec![1.0], None);
        h.push(vec![2.0], Some(0));
        h.push(vec![3.0], Some(1));
        assert_eq!(h.input(0, 2, false), vec![3.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        h.clear();
        assert_eq!(h.input(0, 2, false), vec![0.0; 6]);
    }
}
