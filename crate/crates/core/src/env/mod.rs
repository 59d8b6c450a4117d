//! Cooperative Dec-POMDP contract and the two built-in tasks.

mod gridworld;
pub(crate) mod history;
mod matrix;
mod rollout;

pub use gridworld::{GridConfig, GridWorld, GRID_ACTIONS};
pub use history::{agent_input_dim, AgentHistory};
pub use matrix::{MatrixGame, FIXTURE_PAYOFF};
pub use rollout::{run_episode, ActionValueSource, InputLayout};

use crate::error::{Error, Result};

/// Static description: agent count, dimensions, horizon and discount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub gamma: f64,
}

impl DecPomdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::Config(format!(
                "a Dec-POMDP needs at least 2 agents, got {}",
                self.n_agents
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} outside [0, 1]", self.gamma)));
        }
        if self.action_dim == 0 || self.obs_dim == 0 || self.state_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// What every agent (and the centralised learner) sees at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Observation,
    /// Shared team reward.
    pub reward: f64,
    /// Environmental termination; no bootstrapping past it.
    pub terminated: bool,
    /// Horizon reached without termination.
    pub truncated: bool,
    /// Task solved (team goal reached / optimal joint action played).
    pub success: bool,
}

pub trait Env: Send {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &DecPomdpSpec;
    /// Deterministic function of `seed`.
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome>;
}

/// Environment selection keys (`env.*` in the run configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub name: String,
    pub grid_size: usize,
    pub n_agents: usize,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "gridworld".into(),
            grid_size: 7,
            n_agents: 4,
            horizon: 40,
            gamma: 0.99,
        }
    }
}

impl EnvConfig {
    pub fn matrix() -> Self {
        Self {
            name: "matrix".into(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>> {
        match self.name.as_str() {
            "matrix" => Ok(Box::new(MatrixGame::fixture(self.gamma))),
            "gridworld" => Ok(Box::new(GridWorld::new(self.grid_config())?)),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            size: self.grid_size,
            n_agents: self.n_agents,
            horizon: self.horizon,
            gamma: self.gamma,
            ..GridConfig::default()
        }
    }

    /// Fixture tag recorded in dataset metadata.
    pub fn fixture_tag(&self) -> String {
        match self.name.as_str() {
            "matrix" => "matrix".to_string(),
            _ => format!(
                "gridworld-{}x{}-n{}-t{}",
                self.grid_size, self.grid_size, self.n_agents, self.horizon
            ),
        }
    }
}

/// Checks a joint action against the current availability masks.
pub(crate) fn check_joint_action(
    spec: &DecPomdpSpec,
    avail: &[Vec<bool>],
    joint_action: &[usize],
) -> Result<()> {
    if joint_action.len() != spec.n_agents {
        return Err(Error::Contract(format!(
            "joint action has {} entries for {} agents",
            joint_action.len(),
            spec.n_agents
        )));
    }
    for (i, &a) in joint_action.iter().enumerate() {
        if a >= spec.action_dim || !avail[i][a] {
            return Err(Error::Contract(format!(
                "agent {i} chose unavailable action {a}"
            )));
        }
    }
    Ok(())
}
