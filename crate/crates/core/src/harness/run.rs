//! The online training loop shared by fine-tuning, behaviour training and
//! the unlearning diagnostic.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::eval::evaluate;
use super::metrics::{parse_metrics, write_metrics, MetricsRow};
use super::rng::{restore_rng, stream_rng, Stream};
use crate::checkpoint::Checkpoint;
use crate::env::{run_episode, Env};
use crate::error::{Error, Result};
use crate::exploration::Explorer;
use crate::learner::{chosen_q_tot, OnlineConfig, OnlineLearner};
use crate::networks::{QmixArch, QmixNet, TargetPair};
use crate::replay::{Batch, Dataset, EpisodeRecord, MixingRatioSampler, ReplayBuffer};
use crate::tensor::Tensor;

/// Networks and data an online run may start from.
#[derive(Debug, Clone, Default)]
pub struct OnlineSources {
    pub policy: Option<QmixNet>,
    pub offline_target: Option<QmixNet>,
    pub dataset: Option<Dataset>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    loss: f64,
    loss_n: u64,
    mem: f64,
    mem_n: u64,
}

pub fn build_arch(config: &RunConfig, env: &dyn Env) -> QmixArch {
    QmixArch {
        hidden_dim: config.hidden_dim,
        mixing_hidden_dim: config.mixing_hidden_dim,
        window: config.window,
        agent_id: config.agent_id,
        ..QmixArch::for_spec(env.spec())
    }
}

pub struct OnlineRun {
    pub config: RunConfig,
    env: Box<dyn Env>,
    eval_env: Box<dyn Env>,
    pub learner: OnlineLearner,
    pub explorer: Explorer,
    pub buffer: ReplayBuffer,
    sampler: MixingRatioSampler,
    dataset: Option<Dataset>,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    pub phase_steps: u64,
    pub t_env: u64,
    pub episodes: u64,
    next_eval: u64,
    pub rows: Vec<MetricsRow>,
    /// `(t_env, λ)` for every learner update.
    pub lambda_log: Vec<(u64, f64)>,
    /// Offline episodes drawn into batches so far.
    pub offline_draws: u64,
    acc: Accumulator,
    probe: Option<Batch>,
    pub probe_curve: Vec<(u64, f64)>,
    next_probe: u64,
    snapshot_root: Option<PathBuf>,
    next_snapshot: u64,
}

impl OnlineRun {
    pub fn new(
        config: &RunConfig,
        sources: OnlineSources,
        phase_steps: u64,
    ) -> Result<Self> {
        config.validate()?;
        let preset = config.preset();
        let env = config.env.build()?;
        let eval_env = config.env.build()?;
        let spec = *env.spec();
        let (live, target) = if preset.from_scratch {
            let arch = build_arch(config, env.as_ref());
            let mut init = stream_rng(config.seed, Stream::Init);
            let live = QmixNet::new(arch, &mut init)?;
            (live.clone(), live)
        } else {
            let policy = sources.policy.clone().ok_or_else(|| {
                Error::Config(format!("{} needs a pretrained policy", config.algorithm))
            })?;
            let target = sources.offline_target.clone().ok_or_else(|| {
                Error::Config(format!("{} needs the offline target network", config.algorithm))
            })?;
            (policy, target)
        };
        live.arch.check_spec(&spec)?;
        let pair = TargetPair::with_target(live, target, config.sync_interval)?;
        let memory = if preset.memory {
            Some(sources.offline_target.clone().ok_or_else(|| {
                Error::Config("the memory target needs an offline target checkpoint".into())
            })?)
        } else {
            None
        };
        let online = OnlineConfig {
            batch_size: config.batch_size,
            sync_interval: config.sync_interval,
            gamma: spec.gamma,
            lambda: config.lambda_schedule(),
            cql_alpha: preset.online_cql.then_some(config.online_cql_alpha),
            mu: config.offline_mu,
            adam: config.adam,
        };
        let learner = OnlineLearner::new(pair, memory, online, stream_rng(config.seed, Stream::Cql))?;
        let sampler = MixingRatioSampler::new(config.mixing_ratio)?;
        let dataset = if sampler.composition(config.batch_size).0 > 0 {
            let d = sources.dataset.ok_or_else(|| {
                Error::Config("a positive mixing ratio needs an offline dataset".into())
            })?;
            d.meta.check_spec(&spec)?;
            Some(d)
        } else {
            None
        };
        let explorer = Explorer::new(
            config.exploration_mode(),
            config.epsilon_schedule(preset.from_scratch, phase_steps),
        );
        Ok(Self {
            env,
            eval_env,
            learner,
            explorer,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            sampler,
            dataset,
            env_rng: stream_rng(config.seed, Stream::EnvSeeds),
            explore_rng: stream_rng(config.seed, Stream::Explore),
            batch_rng: stream_rng(config.seed, Stream::Batch),
            phase_steps,
            t_env: 0,
            episodes: 0,
            next_eval: 0,
            rows: Vec::new(),
            lambda_log: Vec::new(),
            offline_draws: 0,
            acc: Accumulator::default(),
            probe: None,
            probe_curve: Vec::new(),
            next_probe: 0,
            snapshot_root: None,
            next_snapshot: config.snapshot_interval,
            config: config.clone(),
        })
    }

    /// Keeps the per-step ε trace in `explorer.trace`.
    pub fn record_epsilon(&mut self) {
        self.explorer.trace.get_or_insert_with(Vec::new);
    }

    /// Tracks mean `Q_tot` on a frozen probe batch.
    pub fn set_probe(&mut self, probe: Batch) {
        self.probe = Some(probe);
    }

    pub fn snapshots_to(&mut self, root: &Path) {
        self.snapshot_root = Some(root.to_path_buf());
    }

    pub fn live(&self) -> &QmixNet {
        &self.learner.pair.live
    }

    pub fn probe_mean(&self) -> Result<Option<f64>> {
        match &self.probe {
            Some(b) => {
                let q = chosen_q_tot(self.live(), b)?;
                Ok(Some(q.iter().sum::<f64>() / q.len() as f64))
            }
            None => Ok(None),
        }
    }

    fn record_row(&mut self, step: u64) -> Result<()> {
        let stats = evaluate(
            &self.learner.pair.live,
            self.eval_env.as_mut(),
            self.config.eval_episodes,
            self.config.eval_seed,
        )?;
        let acc = std::mem::take(&mut self.acc);
        self.rows.push(MetricsRow {
            step,
            episode_return_mean: Some(stats.mean_return),
            success_rate: Some(stats.success_rate),
            epsilon: Some(self.explorer.schedule.value(self.t_env)),
            lambda_memory: Some(self.learner.lambda_at(self.t_env)),
            loss: (acc.loss_n > 0).then(|| acc.loss / acc.loss_n as f64),
            q_probe_mean: self.probe_mean()?,
            mem_branch_fraction: (acc.mem_n > 0).then(|| acc.mem / acc.mem_n as f64),
        });
        Ok(())
    }

    fn catch_up(&mut self) -> Result<()> {
        let mut wrote = false;
        while self.t_env >= self.next_eval {
            self.record_row(self.next_eval)?;
            self.next_eval += self.config.eval_interval;
            wrote = true;
        }
        if self.probe.is_some() {
            while self.t_env >= self.next_probe && self.next_probe <= self.phase_steps {
                let q = self.probe_mean()?.expect("probe set");
                self.probe_curve.push((self.next_probe, q));
                self.next_probe += self.config.probe_interval;
            }
        }
        if wrote && self.config.snapshot_interval > 0 && self.t_env >= self.next_snapshot {
            if let Some(root) = self.snapshot_root.clone() {
                self.save_snapshot(&root.join(format!("step-{}", self.t_env)))?;
            }
            while self.next_snapshot <= self.t_env {
                self.next_snapshot += self.config.snapshot_interval;
            }
        }
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        let layout = self.learner.pair.live.arch.layout();
        let action_dim = self.learner.pair.live.arch.action_dim;
        for _ in 0..self.config.updates_per_episode {
            let sample = self.sampler.sample(
                self.dataset.as_ref(),
                &self.buffer,
                self.config.batch_size,
                &mut self.batch_rng,
            )?;
            self.offline_draws += sample.offline as u64;
            let batch = Batch::from_episodes(&sample.episodes, layout, action_dim)?;
            let m = self.learner.update(&batch, self.t_env)?;
            self.lambda_log.push((self.t_env, m.lambda));
            self.acc.loss += m.loss;
            self.acc.loss_n += 1;
            if self.learner.memory.is_some() {
                self.acc.mem += m.mem_branch_fraction;
                self.acc.mem_n += 1;
            }
        }
        Ok(())
    }

    /// Collects one episode, learns from the buffer once warm, and writes
    /// any evaluation rows that fell due. Returns the episode.
    pub fn step_episode(&mut self) -> Result<&EpisodeRecord> {
        if self.rows.is_empty() && self.t_env == 0 {
            self.catch_up()?;
        }
        let seed = self.env_rng.random::<u64>();
        let ep = run_episode(
            self.env.as_mut(),
            &self.learner.pair.live,
            &mut self.explorer,
            &mut self.explore_rng,
            seed,
        )?;
        self.t_env += ep.len() as u64;
        self.episodes += 1;
        self.buffer.push(ep);
        if self.buffer.len() >= self.config.warmup_episodes.max(1) {
            self.learn()?;
        }
        self.catch_up()?;
        Ok(self.buffer.get(self.buffer.len() - 1).expect("just pushed"))
    }

    /// Runs until `phase_steps` environment steps have been taken.
    pub fn run(&mut self) -> Result<()> {
        if self.rows.is_empty() && self.t_env == 0 {
            self.catch_up()?;
        }
        while self.t_env < self.phase_steps {
            self.step_episode()?;
        }
        Ok(())
    }

    pub fn write_metrics(&self, path: &Path) -> Result<()> {
        write_metrics(path, &self.rows)
    }

    pub fn save_snapshot(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut ckpt = Checkpoint::new().with_meta("kind", "online-snapshot");
        let counters: [(&str, u64); 12] = [
            ("seed", self.config.seed),
            ("t_env", self.t_env),
            ("episodes", self.episodes),
            ("next_eval", self.next_eval),
            ("next_probe", self.next_probe),
            ("next_snapshot", self.next_snapshot),
            ("pair_updates", self.learner.pair.updates()),
            ("adam_steps", self.learner.adam.steps()),
            ("step_count", self.learner.pair.live.params.step_count()),
            ("ovm_violations", self.learner.ovm_violations),
            ("explorer_t", self.explorer.t),
            ("explorer_count", self.explorer.explorer_count),
        ];
        for (k, v) in counters {
            ckpt.push_meta(k, v);
        }
        ckpt.push_meta("offline_draws", self.offline_draws);
        ckpt.push_meta("buffer_capacity", self.buffer.capacity());
        ckpt.push_meta("buffer_inserted", self.buffer.inserted());
        for (k, rng) in [
            ("rng.env", &self.env_rng),
            ("rng.explore", &self.explore_rng),
            ("rng.batch", &self.batch_rng),
            ("rng.cql", &self.learner.cql_rng),
        ] {
            ckpt.push_meta(k, rng.get_word_pos());
        }
        for (name, p) in self.learner.pair.live.params.iter() {
            ckpt.insert(format!("live.{name}"), p.value.clone());
        }
        for (name, p) in self.learner.pair.target.params.iter() {
            ckpt.insert(format!("target.{name}"), p.value.clone());
        }
        let (first, second) = self.learner.adam.moments();
        for ((name, _), (m, v)) in self
            .learner
            .pair
            .live
            .params
            .iter()
            .zip(first.iter().zip(second))
        {
            ckpt.insert(format!("adam.m.{name}"), m.clone());
            ckpt.insert(format!("adam.v.{name}"), v.clone());
        }
        ckpt.save(&dir.join("state.ckpt"))?;
        let mut buf = Vec::new();
        for ep in self.buffer.iter() {
            serde_json::to_writer(&mut buf, ep)
                .map_err(|e| Error::Config(format!("buffer episode: {e}")))?;
            buf.push(b'\n');
        }
        let path = dir.join("buffer.jsonl");
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        write_metrics(&dir.join("metrics.csv"), &self.rows)?;
        let curve: String = self
            .probe_curve
            .iter()
            .map(|(s, q)| format!("{s},{q}\n"))
            .collect();
        let path = dir.join("probe_curve.csv");
        fs::write(&path, curve).map_err(|e| Error::io(&path, e))
    }

    /// Rebuilds a run from `new(..)` arguments plus a snapshot directory.
    pub fn resume(
        config: &RunConfig,
        sources: OnlineSources,
        phase_steps: u64,
        dir: &Path,
    ) -> Result<Self> {
        let mut run = Self::new(config, sources, phase_steps)?;
        let state_path = dir.join("state.ckpt");
        let ckpt = Checkpoint::load(&state_path)?;
        if ckpt.meta("kind") != Some("online-snapshot") {
            return Err(Error::format(&state_path, "not an online snapshot"));
        }
        let num = |key: &str| -> Result<u64> {
            ckpt.meta(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(&state_path, format!("bad or missing {key}")))
        };
        let pos = |key: &str| -> Result<u128> {
            ckpt.meta(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(&state_path, format!("bad or missing {key}")))
        };
        if num("seed")? != config.seed {
            return Err(Error::Config("snapshot was taken with a different seed".into()));
        }
        let load_into = |prefix: &str, net: &mut QmixNet| -> Result<()> {
            let ids: Vec<_> = net.params.ids().collect();
            for id in ids {
                let name = format!("{prefix}.{}", net.params.name(id));
                let t = ckpt.tensor(&name)?;
                if t.shape() != net.params.value(id).shape() {
                    return Err(Error::format(&state_path, format!("shape of {name}")));
                }
                *net.params.value_mut(id) = t.clone();
            }
            Ok(())
        };
        load_into("live", &mut run.learner.pair.live)?;
        load_into("target", &mut run.learner.pair.target)?;
        let names: Vec<String> = run
            .learner
            .pair
            .live
            .params
            .iter()
            .map(|(n, _)| n.to_string())
            .collect();
        let take = |kind: &str| -> Result<Vec<Tensor>> {
            names
                .iter()
                .map(|n| ckpt.tensor(&format!("adam.{kind}.{n}")).cloned())
                .collect()
        };
        let (first, second) = (take("m")?, take("v")?);
        run.learner.adam.restore(first, second, num("adam_steps")?);
        run.learner.pair.live.params.set_step_count(num("step_count")?);
        run.learner.pair.set_updates(num("pair_updates")?);
        run.learner.ovm_violations = num("ovm_violations")?;
        run.learner.cql_rng = restore_rng(config.seed, Stream::Cql, pos("rng.cql")?);
        run.env_rng = restore_rng(config.seed, Stream::EnvSeeds, pos("rng.env")?);
        run.explore_rng = restore_rng(config.seed, Stream::Explore, pos("rng.explore")?);
        run.batch_rng = restore_rng(config.seed, Stream::Batch, pos("rng.batch")?);
        run.t_env = num("t_env")?;
        run.episodes = num("episodes")?;
        run.next_eval = num("next_eval")?;
        run.next_probe = num("next_probe")?;
        run.next_snapshot = num("next_snapshot")?;
        run.explorer.t = num("explorer_t")?;
        run.explorer.explorer_count = num("explorer_count")?;
        run.offline_draws = num("offline_draws")?;

        let buf_path = dir.join("buffer.jsonl");
        let text = fs::read_to_string(&buf_path).map_err(|e| Error::io(&buf_path, e))?;
        let episodes = text
            .lines()
            .map(|l| {
                serde_json::from_str::<EpisodeRecord>(l)
                    .map_err(|e| Error::format(&buf_path, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        run.buffer = ReplayBuffer::restore(
            num("buffer_capacity")? as usize,
            episodes,
            num("buffer_inserted")?,
        );
        let m_path = dir.join("metrics.csv");
        let text = fs::read_to_string(&m_path).map_err(|e| Error::io(&m_path, e))?;
        run.rows = parse_metrics(&text, &m_path)?;
        let c_path = dir.join("probe_curve.csv");
        let text = fs::read_to_string(&c_path).map_err(|e| Error::io(&c_path, e))?;
        run.probe_curve = text
            .lines()
            .map(|l| {
                let (s, q) = l
                    .split_once(',')
                    .ok_or_else(|| Error::format(&c_path, "bad probe row"))?;
                Ok((
                    s.parse().map_err(|_| Error::format(&c_path, "bad step"))?,
                    q.parse().map_err(|_| Error::format(&c_path, "bad value"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(run)
    }
}
