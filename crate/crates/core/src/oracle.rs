//! Exact solutions for the built-in tasks.
//!
//! The gridworld solver runs finite-horizon value iteration on the fully
//! observed joint state, so its values upper-bound any decentralised policy.

use crate::env::{GridConfig, GridWorld, GRID_ACTIONS};
use crate::error::{Error, Result};

/// Joint state spaces larger than this are refused.
pub const MAX_JOINT_STATES: usize = 10_000_000;
/// Keep every per-horizon table only while `states·(H+1)` stays below this.
const MAX_STORED_VALUES: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    pub optimal_return: f64,
    pub optimal_joint: Vec<usize>,
    /// The payoff table itself: `q[a0][a1]`.
    pub q: Vec<Vec<f64>>,
}

/// Exhaustive argmax; ties go to the lexicographically smallest joint action.
pub fn solve_matrix_game(payoff: &[Vec<f64>]) -> Result<MatrixSolution> {
    if payoff.is_empty() || payoff.iter().any(|r| r.len() != payoff[0].len() || r.is_empty()) {
        return Err(Error::Config("payoff table must be a non-empty rectangle".into()));
    }
    let mut best = (0, 0);
    for (i, row) in payoff.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > payoff[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    Ok(MatrixSolution {
        optimal_return: payoff[best.0][best.1],
        optimal_joint: vec![best.0, best.1],
        q: payoff.to_vec(),
    })
}

/// Value tables of the gridworld MMDP, indexed by steps remaining.
#[derive(Debug, Clone)]
pub struct GridSolution {
    config: GridConfig,
    cells: usize,
    states: usize,
    /// `values[k]` holds `V_{first_stored + k}`.
    values: Vec<Vec<f64>>,
    first_stored: usize,
    covered: Vec<bool>,
}

fn successors(config: &GridConfig) -> Vec<Vec<usize>> {
    let n = config.size;
    (0..n * n)
        .map(|c| {
            let mut out: Vec<usize> = (0..GRID_ACTIONS)
                .map(|a| {
                    let (x, y) = config.moved((c % n, c / n), a);
                    y * n + x
                })
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Replaces every entry by the max over agent `k`'s successor cells.
fn max_pass(src: &[f64], dst: &mut [f64], stride: usize, cells: usize, succ: &[Vec<usize>]) {
    let block = stride * cells;
    for base in (0..src.len()).step_by(block) {
        for (c, next) in succ.iter().enumerate() {
            let out = &mut dst[base + c * stride..base + (c + 1) * stride];
            out.copy_from_slice(&src[base + next[0] * stride..base + (next[0] + 1) * stride]);
            for &c2 in &next[1..] {
                let other = &src[base + c2 * stride..base + (c2 + 1) * stride];
                for (o, v) in out.iter_mut().zip(other) {
                    if *v > *o {
                        *o = *v;
                    }
                }
            }
        }
    }
}

/// Exact finite-horizon solution of the joint gridworld problem.
pub fn solve_gridworld(config: &GridConfig) -> Result<GridSolution> {
    config.validate()?;
    let cells = config.size * config.size;
    let states = (0..config.n_agents)
        .try_fold(1usize, |acc, _| acc.checked_mul(cells))
        .filter(|s| *s <= MAX_JOINT_STATES)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{} agents on {} cells exceed {MAX_JOINT_STATES} joint states",
                config.n_agents, cells
            ))
        })?;
    let goals: Vec<usize> = config
        .goal_cells()?
        .iter()
        .map(|(x, y)| y * config.size + x)
        .collect();
    let covered: Vec<bool> = (0..states)
        .map(|s| {
            let pos = decode(s, cells, config.n_agents);
            goals.iter().all(|g| pos.contains(g))
        })
        .collect();
    let succ = successors(config);
    let horizon = config.horizon;
    let keep_all = states.saturating_mul(horizon + 1) <= MAX_STORED_VALUES;

    let mut values = vec![vec![0.0; states]];
    let mut g = vec![0.0; states];
    let mut scratch = vec![0.0; states];
    for _h in 1..=horizon {
        let prev = values.last().expect("at least V_0");
        for s in 0..states {
            g[s] = if covered[s] {
                config.goal_reward
            } else {
                config.step_reward + config.gamma * prev[s]
            };
        }
        let mut next = vec![0.0; states];
        let mut stride = 1;
        for k in 0..config.n_agents {
            let (src, dst): (&[f64], &mut [f64]) = if k == 0 {
                (&g, &mut next)
            } else if k % 2 == 1 {
                (&next, &mut scratch)
            } else {
                (&scratch, &mut next)
            };
            max_pass(src, dst, stride, cells, &succ);
            stride *= cells;
        }
        if config.n_agents % 2 == 0 {
            std::mem::swap(&mut next, &mut scratch);
        }
        if !keep_all && values.len() == 2 {
            values.remove(0);
        }
        values.push(next);
    }
    let first_stored = horizon + 1 - values.len();
    Ok(GridSolution {
        config: config.clone(),
        cells,
        states,
        values,
        first_stored,
        covered,
    })
}

fn decode(mut s: usize, cells: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let c = s % cells;
            s /= cells;
            c
        })
        .collect()
}

impl GridSolution {
    pub fn states(&self) -> usize {
        self.states
    }

    fn encode(&self, positions: &[(usize, usize)]) -> Result<usize> {
        if positions.len() != self.config.n_agents
            || positions
                .iter()
                .any(|p| p.0 >= self.config.size || p.1 >= self.config.size)
        {
            return Err(Error::Config(format!("invalid joint position {positions:?}")));
        }
        Ok(positions
            .iter()
            .rev()
            .fold(0, |acc, (x, y)| acc * self.cells + y * self.config.size + x))
    }

    fn table(&self, remaining: usize) -> Result<&[f64]> {
        if remaining < self.first_stored || remaining > self.config.horizon {
            return Err(Error::Usage(format!(
                "values for {remaining} remaining steps were not retained"
            )));
        }
        Ok(&self.values[remaining - self.first_stored])
    }

    /// Optimal discounted return from `positions` with `remaining` steps left.
    pub fn value(&self, positions: &[(usize, usize)], remaining: usize) -> Result<f64> {
        Ok(self.table(remaining)?[self.encode(positions)?])
    }

    /// Optimal return from a fresh episode starting at `positions`.
    pub fn optimal_return(&self, positions: &[(usize, usize)]) -> Result<f64> {
        self.value(positions, self.config.horizon)
    }

    fn backup(&self, next: usize, prev: &[f64]) -> f64 {
        if self.covered[next] {
            self.config.goal_reward
        } else {
            self.config.step_reward + self.config.gamma * prev[next]
        }
    }

    fn successor(&self, positions: &[(usize, usize)], joint: &[usize]) -> Result<usize> {
        if joint.len() != positions.len() || joint.iter().any(|a| *a >= GRID_ACTIONS) {
            return Err(Error::Contract(format!("invalid joint action {joint:?}")));
        }
        let moved: Vec<(usize, usize)> = positions
            .iter()
            .zip(joint)
            .map(|(p, a)| self.config.moved(*p, *a))
            .collect();
        self.encode(&moved)
    }

    /// `Q*(s, a)` with `remaining` steps left, including this one.
    pub fn optimal_q(
        &self,
        positions: &[(usize, usize)],
        joint: &[usize],
        remaining: usize,
    ) -> Result<f64> {
        if remaining == 0 {
            return Err(Error::Usage("no steps remaining".into()));
        }
        let prev = self.table(remaining - 1)?;
        Ok(self.backup(self.successor(positions, joint)?, prev))
    }

    /// Lexicographically smallest optimal joint action.
    pub fn optimal_action(&self, positions: &[(usize, usize)], remaining: usize) -> Result<Vec<usize>> {
        let n = self.config.n_agents;
        let mut best: Option<(f64, Vec<usize>)> = None;
        for joint in joint_actions(n) {
            let q = self.optimal_q(positions, &joint, remaining)?;
            if best.as_ref().is_none_or(|(b, _)| q > *b) {
                best = Some((q, joint));
            }
        }
        Ok(best.expect("at least one joint action").1)
    }

    /// Mean optimal return over seeded spawns of `world`.
    pub fn mean_optimal_return(&self, world: &GridWorld, seeds: &[u64]) -> Result<f64> {
        if seeds.is_empty() {
            return Err(Error::Usage("need at least one spawn seed".into()));
        }
        let mut total = 0.0;
        for &s in seeds {
            total += self.optimal_return(&world.spawn_positions(s))?;
        }
        Ok(total / seeds.len() as f64)
    }

    /// Largest gap between the top stored table and a brute-force joint
    /// Bellman backup of the table below it.
    pub fn bellman_residual(&self) -> Result<f64> {
        let top = self.config.horizon;
        if top == 0 || top - 1 < self.first_stored {
            return Err(Error::Usage("need two consecutive tables".into()));
        }
        let cur = self.table(top)?;
        let prev = self.table(top - 1)?;
        let n = self.config.n_agents;
        let actions: Vec<Vec<usize>> = joint_actions(n).collect();
        let mut worst: f64 = 0.0;
        for s in 0..self.states {
            let pos: Vec<(usize, usize)> = decode(s, self.cells, n)
                .into_iter()
                .map(|c| (c % self.config.size, c / self.config.size))
                .collect();
            let mut best = f64::NEG_INFINITY;
            for a in &actions {
                best = best.max(self.backup(self.successor(&pos, a)?, prev));
            }
            worst = worst.max((best - cur[s]).abs());
        }
        Ok(worst)
    }
}

/// All joint actions in lexicographic order (agent 0 most significant).
fn joint_actions(n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = GRID_ACTIONS.pow(n as u32);
    (0..total).map(move |mut k| {
        let mut a = vec![0; n];
        for slot in a.iter_mut().rev() {
            *slot = k % GRID_ACTIONS;
            k /= GRID_ACTIONS;
        }
        a
    })
}
