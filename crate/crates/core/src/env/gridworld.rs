use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_joint_action, DecPomdpSpec, Env, Observation, StepOutcome};
use crate::error::{Error, Result};

/// Action encoding: stay, up, down, left, right.
pub const GRID_ACTIONS: usize = 5;

const GOAL_OFFSETS: [(i64, i64); 8] = [
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
    (0, -2),
    (-2, 0),
    (2, 0),
    (0, 2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub size: usize,
    pub n_agents: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Goal cells as `(x, y)`; defaults to a ring around the centre.
    pub goals: Option<Vec<(usize, usize)>>,
    /// Chebyshev radius within which goal offsets are observed.
    pub view_radius: usize,
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            size: 7,
            n_agents: 4,
            horizon: 40,
            gamma: 0.99,
            goals: None,
            view_radius: 2,
            step_reward: -0.05,
            goal_reward: 10.0,
        }
    }
}

impl GridConfig {
    /// One goal per agent; the team succeeds once every goal is occupied.
    pub fn goal_cells(&self) -> Result<Vec<(usize, usize)>> {
        let goals = match &self.goals {
            Some(g) => g.clone(),
            None => {
                if self.n_agents > GOAL_OFFSETS.len() {
                    return Err(Error::Config(format!(
                        "default goal layout supports at most {} agents",
                        GOAL_OFFSETS.len()
                    )));
                }
                let c = (self.size / 2) as i64;
                GOAL_OFFSETS[..self.n_agents]
                    .iter()
                    .map(|(dx, dy)| {
                        let (x, y) = (c + dx, c + dy);
                        if x < 0 || y < 0 || x >= self.size as i64 || y >= self.size as i64 {
                            Err(Error::Config(format!(
                                "grid of size {} too small for {} goals",
                                self.size, self.n_agents
                            )))
                        } else {
                            Ok((x as usize, y as usize))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if goals.len() != self.n_agents {
            return Err(Error::Config("need exactly one goal per agent".into()));
        }
        for (i, g) in goals.iter().enumerate() {
            if g.0 >= self.size || g.1 >= self.size {
                return Err(Error::Config(format!("goal {g:?} outside the grid")));
            }
            if goals[..i].contains(g) {
                return Err(Error::Config(format!("duplicate goal {g:?}")));
            }
        }
        Ok(goals)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || self.n_agents == 0 || self.horizon == 0 {
            return Err(Error::Config(format!("degenerate grid config {self:?}")));
        }
        if self.n_agents > self.size * self.size {
            return Err(Error::Config("more agents than cells".into()));
        }
        self.goal_cells().map(|_| ())
    }

    pub fn obs_dim(&self) -> usize {
        2 + 3 * self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_agents + 1
    }

    /// Position after one move, walls act as "stay".
    pub fn moved(&self, (x, y): (usize, usize), action: usize) -> (usize, usize) {
        match action {
            1 if y > 0 => (x, y - 1),
            2 if y + 1 < self.size => (x, y + 1),
            3 if x > 0 => (x - 1, y),
            4 if x + 1 < self.size => (x + 1, y),
            _ => (x, y),
        }
    }
}

/// `size x size` grid; agents must jointly occupy every goal cell.
///
/// Per-step reward is `step_reward` until the goals are covered, which pays
/// `goal_reward` and terminates. Agents see their own position and the
/// offsets of goals within `view_radius`.
#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    spec: DecPomdpSpec,
    goals: Vec<(usize, usize)>,
    positions: Vec<(usize, usize)>,
    t: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let spec = DecPomdpSpec {
            n_agents: config.n_agents,
            state_dim: config.state_dim(),
            obs_dim: config.obs_dim(),
            action_dim: GRID_ACTIONS,
            horizon: config.horizon,
            gamma: config.gamma,
        };
        spec.validate()?;
        let goals = config.goal_cells()?;
        Ok(Self {
            positions: vec![(0, 0); config.n_agents],
            config,
            spec,
            goals,
            t: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn goals(&self) -> &[(usize, usize)] {
        &self.goals
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// Spawn layout used by `reset(seed)`: distinct uniformly drawn cells.
    pub fn spawn_positions(&self, seed: u64) -> Vec<(usize, usize)> {
        let n = self.config.size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<usize> = (0..n * n).collect();
        let (chosen, _) = cells.partial_shuffle(&mut rng, self.config.n_agents);
        chosen.iter().map(|c| (c % n, c / n)).collect()
    }

    /// Resets to an explicit layout instead of a seeded draw.
    pub fn reset_to(&mut self, positions: &[(usize, usize)]) -> Result<Observation> {
        if positions.len() != self.config.n_agents
            || positions
                .iter()
                .any(|p| p.0 >= self.config.size || p.1 >= self.config.size)
        {
            return Err(Error::Config(format!("invalid spawn layout {positions:?}")));
        }
        self.positions = positions.to_vec();
        self.t = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn covered(&self) -> bool {
        self.goals.iter().all(|g| self.positions.contains(g))
    }

    fn observe(&self) -> Observation {
        let scale = (self.config.size - 1).max(1) as f64;
        let r = self.config.view_radius as i64;
        let obs = self
            .positions
            .iter()
            .map(|&(x, y)| {
                let mut o = Vec::with_capacity(self.spec.obs_dim);
                o.push(x as f64 / scale);
                o.push(y as f64 / scale);
                for &(gx, gy) in &self.goals {
                    let dx = gx as i64 - x as i64;
                    let dy = gy as i64 - y as i64;
                    if dx.abs() <= r && dy.abs() <= r {
                        let rr = r.max(1) as f64;
                        o.extend([dx as f64 / rr, dy as f64 / rr, 1.0]);
                    } else {
                        o.extend([0.0, 0.0, 0.0]);
                    }
                }
                o
            })
            .collect();
        let mut state: Vec<f64> = self
            .positions
            .iter()
            .flat_map(|&(x, y)| [x as f64 / scale, y as f64 / scale])
            .collect();
        state.push(self.t as f64 / self.config.horizon as f64);
        Observation {
            state,
            obs,
            avail: vec![vec![true; GRID_ACTIONS]; self.config.n_agents],
        }
    }
}

impl Env for GridWorld {
    fn name(&self) -> &'static str {
        "gridworld"
    }

    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let spawn = self.spawn_positions(seed);
        self.reset_to(&spawn).expect("seeded spawn is valid")
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step after episode end; call reset".into()));
        }
        let avail = vec![vec![true; GRID_ACTIONS]; self.config.n_agents];
        check_joint_action(&self.spec, &avail, joint_action)?;
        for (p, &a) in self.positions.iter_mut().zip(joint_action) {
            *p = self.config.moved(*p, a);
        }
        self.t += 1;
        let success = self.covered();
        let truncated = !success && self.t >= self.config.horizon;
        self.done = success || truncated;
        let reward = if success {
            self.config.goal_reward
        } else {
            self.config.step_reward
        };
        Ok(StepOutcome {
            next: self.observe(),
            reward,
            terminated: success,
            truncated,
            success,
        })
    }
}
