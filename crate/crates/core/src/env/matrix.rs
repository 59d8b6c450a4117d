use super::{check_joint_action, DecPomdpSpec, Env, Observation, StepOutcome};
use crate::error::{Error, Result};

/// Two-agent, three-action cooperative payoff table; the optimum is (0, 0).
pub const FIXTURE_PAYOFF: [[f64; 3]; 3] = [
    [8.0, -12.0, -12.0],
    [-12.0, 6.0, 0.0],
    [-12.0, 0.0, 6.0],
];

/// One-shot cooperative matrix game with a single dummy state.
#[derive(Debug, Clone)]
pub struct MatrixGame {
    spec: DecPomdpSpec,
    payoff: Vec<Vec<f64>>,
    best: f64,
    done: bool,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        let n = payoff.len();
        if n == 0 || payoff.iter().any(|r| r.len() != n) {
            return Err(Error::Config("payoff table must be square and non-empty".into()));
        }
        if payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("payoff table has non-finite entries".into()));
        }
        let spec = DecPomdpSpec {
            n_agents: 2,
            state_dim: 1,
            obs_dim: 1,
            action_dim: n,
            horizon: 1,
            gamma,
        };
        spec.validate()?;
        let best = payoff.iter().flatten().copied().fold(f64::MIN, f64::max);
        Ok(Self {
            spec,
            payoff,
            best,
            done: true,
        })
    }

    pub fn fixture(gamma: f64) -> Self {
        Self::new(FIXTURE_PAYOFF.iter().map(|r| r.to_vec()).collect(), gamma)
            .expect("fixture payoff is valid")
    }

    pub fn payoff(&self) -> &[Vec<f64>] {
        &self.payoff
    }

    fn observation(&self) -> Observation {
        Observation {
            state: vec![1.0],
            obs: vec![vec![1.0]; 2],
            avail: vec![vec![true; self.spec.action_dim]; 2],
        }
    }
}

impl Env for MatrixGame {
    fn name(&self) -> &'static str {
        "matrix"
    }

    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.done = false;
        self.observation()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step after termination; call reset".into()));
        }
        let obs = self.observation();
        check_joint_action(&self.spec, &obs.avail, joint_action)?;
        let reward = self.payoff[joint_action[0]][joint_action[1]];
        self.done = true;
        Ok(StepOutcome {
            next: obs,
            reward,
            terminated: true,
            truncated: false,
            success: reward == self.best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_rewards_and_termination() {
        let mut g = MatrixGame::fixture(0.99);
        let o = g.reset(0);
        assert_eq!(o.state, vec![1.0]);
        assert!(o.avail.iter().all(|m| m.iter().all(|&a| a)));
        let out = g.step(&[0, 0]).unwrap();
        assert_eq!(out.reward, 8.0);
        assert!(out.terminated && out.success);
        g.reset(1);
        let out = g.step(&[1, 2]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.terminated && !out.success);
    }

    #[test]
    fn step_after_termination_is_rejected() {
        let mut g = MatrixGame::fixture(0.99);
        g.reset(0);
        g.step(&[1, 1]).unwrap();
        assert!(matches!(g.step(&[1, 1]), Err(Error::Contract(_))));
    }

    #[test]
    fn out_of_range_action_is_contract_violation() {
        let mut g = MatrixGame::fixture(0.99);
        g.reset(0);
        assert!(matches!(g.step(&[3, 0]), Err(Error::Contract(_))));
        assert!(matches!(g.step(&[0]), Err(Error::Contract(_))));
    }

    #[test]
    fn resets_are_identical() {
        let mut g = MatrixGame::fixture(0.99);
        assert_eq!(g.reset(5), g.reset(5));
    }
}
