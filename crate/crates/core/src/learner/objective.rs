//! Loss evaluation shared by the offline and online learners.
//!
//! The live agent network runs once over the batch. Rows for the logged
//! joint actions come first, followed by the CQL sample rows; all of them
//! go through a single stacked mixer pass and the resulting per-agent
//! gradients are scattered back into one agent backward pass.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::networks::QmixNet;
use crate::replay::Batch;
use crate::tensor::Tensor;

/// Distribution μ for the conservative penalty's first expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuMode {
    /// `samples` joint actions per step, each agent uniform over available.
    Uniform { samples: usize },
    /// `samples` joint actions per step from the live per-agent softmax.
    Softmax { samples: usize },
    /// Exact expectation over every available joint action.
    Exhaustive,
}

impl Default for MuMode {
    fn default() -> Self {
        Self::Uniform { samples: 4 }
    }
}

impl FromStr for MuMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform { samples: 4 }),
            "softmax" => Ok(Self::Softmax { samples: 4 }),
            "exhaustive" => Ok(Self::Exhaustive),
            _ => Err(Error::Config(format!("unknown cql mu mode {s:?}"))),
        }
    }
}

impl fmt::Display for MuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform { .. } => "uniform",
            Self::Softmax { .. } => "softmax",
            Self::Exhaustive => "exhaustive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqlRow {
    pub step: usize,
    pub joint: Vec<usize>,
    pub weight: f64,
}

/// Joint actions (with weights) at which `E_μ[Q_tot]` is evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CqlSamples {
    pub rows: Vec<CqlRow>,
}

const MAX_EXHAUSTIVE: usize = 4096;

fn pick_uniform<R: Rng + ?Sized>(mask: &[bool], rng: &mut R) -> usize {
    let count = mask.iter().filter(|m| **m).count();
    let k = rng.random_range(0..count);
    mask.iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .nth(k)
        .map(|(i, _)| i)
        .expect("k < count")
}

fn pick_softmax<R: Rng + ?Sized>(values: &[f64], mask: &[bool], rng: &mut R) -> usize {
    let top = values
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { (v - top).exp() } else { 0.0 })
        .collect();
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut last = 0;
    for (a, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = a;
            if u < *w {
                return a;
            }
            u -= w;
        }
    }
    last
}

/// Draws the μ-side joint actions for every step of `batch`.
pub fn draw_cql_samples<R: Rng + ?Sized>(
    net: &QmixNet,
    batch: &Batch,
    mode: MuMode,
    rng: &mut R,
) -> Result<CqlSamples> {
    let n = batch.n_agents;
    for masks in &batch.avail {
        if masks.iter().any(|m| !m.iter().any(|a| *a)) {
            return Err(Error::Contract("agent has no available action".into()));
        }
    }
    let mut rows = Vec::new();
    match mode {
        MuMode::Uniform { samples } | MuMode::Softmax { samples } => {
            if samples == 0 {
                return Err(Error::Config("cql needs at least one μ sample".into()));
            }
            let values = match mode {
                MuMode::Softmax { .. } => Some(net.agent_values(&batch.inputs)?),
                _ => None,
            };
            let w = 1.0 / samples as f64;
            for (s, masks) in batch.avail.iter().enumerate() {
                for _ in 0..samples {
                    let joint = (0..n)
                        .map(|i| match &values {
                            Some(v) => pick_softmax(v.row(s * n + i), &masks[i], rng),
                            None => pick_uniform(&masks[i], rng),
                        })
                        .collect();
                    rows.push(CqlRow {
                        step: s,
                        joint,
                        weight: w,
                    });
                }
            }
        }
        MuMode::Exhaustive => {
            for (s, masks) in batch.avail.iter().enumerate() {
                let avail: Vec<Vec<usize>> = masks
                    .iter()
                    .map(|m| (0..m.len()).filter(|a| m[*a]).collect())
                    .collect();
                let count = avail.iter().try_fold(1usize, |acc, a| {
                    acc.checked_mul(a.len()).filter(|c| *c <= MAX_EXHAUSTIVE)
                });
                let count = count.ok_or_else(|| {
                    Error::Config(format!(
                        "exhaustive μ needs at most {MAX_EXHAUSTIVE} joint actions per step"
                    ))
                })?;
                let w = 1.0 / count as f64;
                for mut k in 0..count {
                    let mut joint = vec![0; n];
                    for i in (0..n).rev() {
                        joint[i] = avail[i][k % avail[i].len()];
                        k /= avail[i].len();
                    }
                    rows.push(CqlRow { step: s, joint, weight: w });
                }
            }
        }
    }
    Ok(CqlSamples { rows })
}

/// `r + γ·max_{a'} Q̄_tot(τ', a')`, with no bootstrap on terminated steps.
pub fn td_targets(target: &QmixNet, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
    let n = batch.n_agents;
    let values = target.agent_values(&batch.next_inputs)?;
    let mut best = Vec::with_capacity(batch.len() * n);
    for (s, masks) in batch.next_avail.iter().enumerate() {
        for (i, mask) in masks.iter().enumerate() {
            let row = values.row(s * n + i);
            let a = crate::networks::greedy_action(row, mask)?;
            best.push(row[a]);
        }
    }
    let qs = Tensor::new(vec![batch.len(), n], best)?;
    let next = target.mix(&qs, &batch.next_states)?;
    Ok(batch
        .rewards
        .iter()
        .zip(&batch.terminated)
        .zip(next)
        .map(|((r, term), q)| if *term { *r } else { r + gamma * q })
        .collect())
}

/// `Q_tot(τ, a)` at the logged joint actions.
pub fn chosen_q_tot(net: &QmixNet, batch: &Batch) -> Result<Vec<f64>> {
    let n = batch.n_agents;
    let values = net.agent_values(&batch.inputs)?;
    let mut qs = Vec::with_capacity(batch.len() * n);
    for (s, joint) in batch.actions.iter().enumerate() {
        for (i, a) in joint.iter().enumerate() {
            qs.push(values.get2(s * n + i, *a));
        }
    }
    net.mix(&Tensor::new(vec![batch.len(), n], qs)?, &batch.states)
}

/// Offline-memory target: the larger of the two branches.
pub fn ovm_target(memory: f64, td: f64) -> f64 {
    memory.max(td)
}

/// Blend of the TD and memory regressions, averaged over steps.
#[derive(Debug, Clone, Copy)]
pub struct MemoryTerm<'a> {
    pub targets: &'a [f64],
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CqlTerm<'a> {
    pub samples: &'a CqlSamples,
    pub alpha: f64,
}

/// What to minimise on one batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct Objective<'a> {
    pub td_targets: Option<&'a [f64]>,
    pub memory: Option<MemoryTerm<'a>>,
    pub cql: Option<CqlTerm<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// TD (or blended TD/memory) regression loss.
    pub fit: f64,
    /// Unweighted conservative penalty.
    pub cql: f64,
    pub total: f64,
    /// Mean `Q_tot` at the logged actions.
    pub q_mean: f64,
}

/// Evaluates `objective` and accumulates its gradient into `net.params`.
pub fn accumulate_gradients(
    net: &mut QmixNet,
    batch: &Batch,
    objective: &Objective<'_>,
) -> Result<LossTerms> {
    let n = batch.n_agents;
    let steps = batch.len();
    if steps == 0 {
        return Err(Error::Usage("empty batch".into()));
    }
    let QmixNet {
        params,
        agent,
        mixer,
        ..
    } = net;
    let (values, agent_tape) = agent.forward(params, &batch.inputs)?;
    let cql_rows: &[CqlRow] = objective.cql.map_or(&[], |c| &c.samples.rows);
    let total_rows = steps + cql_rows.len();
    let mut qs = Vec::with_capacity(total_rows * n);
    let mut states = Vec::with_capacity(total_rows * batch.states.cols());
    for (s, joint) in batch.actions.iter().enumerate() {
        for (i, a) in joint.iter().enumerate() {
            qs.push(values.get2(s * n + i, *a));
        }
    }
    states.extend_from_slice(batch.states.data());
    for row in cql_rows {
        for (i, a) in row.joint.iter().enumerate() {
            qs.push(values.get2(row.step * n + i, *a));
        }
        states.extend_from_slice(batch.states.row(row.step));
    }
    let qs = Tensor::new(vec![total_rows, n], qs)?;
    let states = Tensor::new(vec![total_rows, batch.states.cols()], states)?;
    let (q_tot, mix_tape) = mixer.forward(params, &qs, &states)?;

    let m = steps as f64;
    let mut upstream = vec![0.0; total_rows];
    let mut fit = 0.0;
    if let Some(y) = objective.td_targets {
        match objective.memory {
            None => {
                for s in 0..steps {
                    let q = q_tot[s];
                    fit += (q - y[s]) * (q - y[s]);
                    upstream[s] = 2.0 * (q - y[s]) / m;
                }
            }
            Some(mem) => {
                let lam = mem.lambda;
                if !(0.0..=1.0).contains(&lam) {
                    return Err(Error::Usage(format!("memory weight {lam} outside [0, 1]")));
                }
                for s in 0..steps {
                    let (q, yt, ym) = (q_tot[s], y[s], mem.targets[s]);
                    fit += (1.0 - lam) * (q - yt) * (q - yt) + lam * (q - ym) * (q - ym);
                    upstream[s] = 2.0 * (1.0 - lam) * (q - yt) / m + 2.0 * lam * (q - ym) / m;
                }
            }
        }
        fit /= m;
    }
    let mut cql = 0.0;
    if let Some(c) = objective.cql {
        let sampled: f64 = cql_rows
            .iter()
            .zip(&q_tot[steps..])
            .map(|(row, q)| row.weight * q)
            .sum();
        let logged: f64 = q_tot[..steps].iter().sum();
        cql = (sampled - logged) / m;
        for s in 0..steps {
            upstream[s] -= c.alpha / m;
        }
        for (u, row) in upstream[steps..].iter_mut().zip(cql_rows) {
            *u = c.alpha * row.weight / m;
        }
    }
    let alpha = objective.cql.map_or(0.0, |c| c.alpha);
    let total = if objective.cql.is_some() { fit + alpha * cql } else { fit };
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss {total} on a batch of {steps} steps (fit {fit}, cql {cql})"
        )));
    }
    let q_mean = q_tot[..steps].iter().sum::<f64>() / m;

    let d_qs = mixer.backward(params, &mix_tape, &upstream)?;
    let mut d_values = Tensor::zeros(values.shape());
    {
        let a_dim = values.cols();
        let dv = d_values.data_mut();
        for (s, joint) in batch.actions.iter().enumerate() {
            for (i, a) in joint.iter().enumerate() {
                dv[(s * n + i) * a_dim + a] += d_qs.get2(s, i);
            }
        }
        for (r, row) in cql_rows.iter().enumerate() {
            for (i, a) in row.joint.iter().enumerate() {
                dv[(row.step * n + i) * a_dim + a] += d_qs.get2(steps + r, i);
            }
        }
    }
    agent.backward(params, &agent_tape, &d_values)?;
    Ok(LossTerms {
        fit,
        cql,
        total,
        q_mean,
    })
}

/// Loss value only; `net` is left untouched.
pub fn objective_value(net: &QmixNet, batch: &Batch, objective: &Objective<'_>) -> Result<f64> {
    let mut scratch = net.clone();
    accumulate_gradients(&mut scratch, batch, objective).map(|t| t.total)
}

/// Squared TD error loss; gradients accumulate into `live`.
pub fn td_loss(live: &mut QmixNet, target: &QmixNet, batch: &Batch, gamma: f64) -> Result<f64> {
    let y = td_targets(target, batch, gamma)?;
    let terms = accumulate_gradients(
        live,
        batch,
        &Objective {
            td_targets: Some(&y),
            ..Objective::default()
        },
    )?;
    Ok(terms.fit)
}

/// `E_μ[Q_tot] − E_D[Q_tot]`; gradients accumulate into `live`.
pub fn cql_penalty(live: &mut QmixNet, batch: &Batch, samples: &CqlSamples) -> Result<f64> {
    let terms = accumulate_gradients(
        live,
        batch,
        &Objective {
            cql: Some(CqlTerm { samples, alpha: 1.0 }),
            ..Objective::default()
        },
    )?;
    Ok(terms.cql)
}

/// `(1−λ)(Q_tot − y)² + λ(Q_tot − y_ovm)²`, averaged over steps.
pub fn ovm_loss(
    live: &mut QmixNet,
    batch: &Batch,
    td_targets: &[f64],
    ovm_targets: &[f64],
    lambda: f64,
) -> Result<f64> {
    let terms = accumulate_gradients(
        live,
        batch,
        &Objective {
            td_targets: Some(td_targets),
            memory: Some(MemoryTerm {
                targets: ovm_targets,
                lambda,
            }),
            cql: None,
        },
    )?;
    Ok(terms.fit)
}
