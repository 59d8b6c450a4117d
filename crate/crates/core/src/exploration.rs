//! Annealed schedules and rollout action selection.
//!
//! Three modes share one signature: independent ε-greedy, centralised
//! sequential exploration (one team coin flip, then at most one agent
//! deviates) and its decentralised variant (each agent flips its own coin
//! with probability ε/N).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::networks::{greedy_action, greedy_joint_action};

/// How the printed annealing formula is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleVariant {
    /// Linear from `start` to `end`, then held at `end`.
    #[default]
    Clamped,
    /// `min(end, 1 - ((start - end) / T)·t)`, taken literally.
    LiteralMin,
}

impl FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped" => Ok(Self::Clamped),
            "literal" => Ok(Self::LiteralMin),
            _ => Err(Error::Config(format!("unknown schedule variant {s:?}"))),
        }
    }
}

impl fmt::Display for ScheduleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Clamped => "clamped",
            Self::LiteralMin => "literal",
        })
    }
}

/// Piecewise-linear anneal over `duration` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    pub duration: u64,
    pub variant: ScheduleVariant,
}

impl Schedule {
    pub fn new(start: f64, end: f64, duration: u64) -> Self {
        Self {
            start,
            end,
            duration,
            variant: ScheduleVariant::Clamped,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, value, 0)
    }

    pub fn with_variant(mut self, variant: ScheduleVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn value(&self, t: u64) -> f64 {
        if self.duration == 0 {
            return self.end;
        }
        let slope = (self.start - self.end) / self.duration as f64;
        match self.variant {
            ScheduleVariant::Clamped => {
                if t >= self.duration {
                    return self.end;
                }
                let v = self.start - slope * t as f64;
                if self.start >= self.end {
                    v.max(self.end)
                } else {
                    v.min(self.end)
                }
            }
            ScheduleVariant::LiteralMin => (1.0 - slope * t as f64).min(self.end),
        }
    }
}

/// Memory coefficient at step `t`: decays linearly from 1 to `lambda_end`
/// over `t_anneal` steps.
pub fn lambda_schedule_value(t: u64, lambda_end: f64, t_anneal: u64) -> f64 {
    Schedule::new(1.0, lambda_end, t_anneal).value(t)
}

pub fn epsilon_value(t: u64, schedule: &Schedule) -> f64 {
    schedule.value(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExplorationMode {
    Independent,
    SequentialCentralized,
    #[default]
    SequentialDecentralized,
}

impl FromStr for ExplorationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "sequential_centralized" => Ok(Self::SequentialCentralized),
            "sequential_decentralized" => Ok(Self::SequentialDecentralized),
            _ => Err(Error::Config(format!("unknown exploration mode {s:?}"))),
        }
    }
}

impl fmt::Display for ExplorationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Independent => "independent",
            Self::SequentialCentralized => "sequential_centralized",
            Self::SequentialDecentralized => "sequential_decentralized",
        })
    }
}

/// Chosen joint action plus which agents took the random branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub actions: Vec<usize>,
    pub explored: Vec<bool>,
}

impl Selection {
    pub fn explorers(&self) -> usize {
        self.explored.iter().filter(|e| **e).count()
    }
}

fn uniform_available<R: Rng + ?Sized>(mask: &[bool], rng: &mut R) -> Result<usize> {
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::Contract("agent has no available action".into()));
    }
    let pick = rng.random_range(0..count);
    Ok(mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("pick < count"))
}

fn check_eps(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::Config(format!("exploration rate {eps} outside [0, 1]")))
    }
}

/// Each agent explores with probability `eps`, independently.
pub fn select_independent<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    masks: &[Vec<bool>],
    eps: f64,
    rng: &mut R,
) -> Result<Selection> {
    per_agent_coin(values, masks, eps, rng)
}

/// One team-level coin with probability `eps`; on heads exactly one
/// uniformly chosen agent acts at random, everyone else greedily.
pub fn select_sequential_centralized<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    masks: &[Vec<bool>],
    eps: f64,
    rng: &mut R,
) -> Result<Selection> {
    check_eps(eps)?;
    let mut actions = greedy_joint_action(values, masks)?;
    let mut explored = vec![false; actions.len()];
    if rng.random::<f64>() < eps {
        let who = rng.random_range(0..actions.len());
        actions[who] = uniform_available(&masks[who], rng)?;
        explored[who] = true;
    }
    Ok(Selection { actions, explored })
}

/// Each agent explores with probability `eps / N` without communicating.
pub fn select_sequential_decentralized<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    masks: &[Vec<bool>],
    eps: f64,
    rng: &mut R,
) -> Result<Selection> {
    check_eps(eps)?;
    let n = values.len().max(1);
    per_agent_coin(values, masks, eps / n as f64, rng)
}

fn per_agent_coin<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    masks: &[Vec<bool>],
    p: f64,
    rng: &mut R,
) -> Result<Selection> {
    check_eps(p)?;
    if values.len() != masks.len() {
        return Err(Error::Shape(format!(
            "{} value rows vs {} masks",
            values.len(),
            masks.len()
        )));
    }
    let mut actions = Vec::with_capacity(values.len());
    let mut explored = Vec::with_capacity(values.len());
    for (v, m) in values.iter().zip(masks) {
        if rng.random::<f64>() < p {
            actions.push(uniform_available(m, rng)?);
            explored.push(true);
        } else {
            actions.push(greedy_action(v, m)?);
            explored.push(false);
        }
    }
    Ok(Selection { actions, explored })
}

/// Stateful selector used during rollouts: owns the ε schedule and the
/// environment-step counter it is evaluated at.
#[derive(Debug, Clone)]
pub struct Explorer {
    pub mode: ExplorationMode,
    pub schedule: Schedule,
    /// Environment steps taken so far (the schedule's `t`).
    pub t: u64,
    /// `(t, ε_t)` for every step when recording is on.
    pub trace: Option<Vec<(u64, f64)>>,
    pub explorer_count: u64,
}

impl Explorer {
    pub fn new(mode: ExplorationMode, schedule: Schedule) -> Self {
        Self {
            mode,
            schedule,
            t: 0,
            trace: None,
            explorer_count: 0,
        }
    }

    pub fn greedy() -> Self {
        Self::new(ExplorationMode::Independent, Schedule::constant(0.0))
    }

    pub fn recording(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn current_epsilon(&self) -> f64 {
        self.schedule.value(self.t)
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        values: &[Vec<f64>],
        masks: &[Vec<bool>],
        rng: &mut R,
    ) -> Result<Selection> {
        let eps = self.schedule.value(self.t);
        let selection = match self.mode {
            ExplorationMode::Independent => select_independent(values, masks, eps, rng)?,
            ExplorationMode::SequentialCentralized => {
                select_sequential_centralized(values, masks, eps, rng)?
            }
            ExplorationMode::SequentialDecentralized => {
                select_sequential_decentralized(values, masks, eps, rng)?
            }
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push((self.t, eps));
        }
        self.explorer_count += selection.explorers() as u64;
        self.t += 1;
        Ok(selection)
    }
}
