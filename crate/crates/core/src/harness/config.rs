//! Flat `key = value` run configuration.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::exploration::{ExplorationMode, Schedule, ScheduleVariant};
use crate::learner::MuMode;
use crate::optim::AdamConfig;
use crate::replay::DatasetMode;

/// Fine-tuning recipes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Offline value memory plus sequential exploration.
    Ovmse,
    /// Offline value memory with independent ε-greedy.
    Ovm,
    /// Plain TD with sequential exploration.
    Se,
    /// Plain TD fine-tuning with independent ε-greedy.
    SwitchCql,
    /// Plain TD with the conservative penalty kept online.
    Macql,
    /// Random initialisation, plain TD, independent ε-greedy.
    Qmix,
}

/// What an [`Algorithm`] switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub memory: bool,
    pub explore: ExplorationMode,
    pub online_cql: bool,
    pub from_scratch: bool,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Ovmse,
        Algorithm::Ovm,
        Algorithm::Se,
        Algorithm::SwitchCql,
        Algorithm::Macql,
        Algorithm::Qmix,
    ];

    pub fn preset(self) -> Preset {
        let (memory, explore, online_cql, from_scratch) = match self {
            Self::Ovmse => (true, ExplorationMode::SequentialDecentralized, false, false),
            Self::Ovm => (true, ExplorationMode::Independent, false, false),
            Self::Se => (false, ExplorationMode::SequentialDecentralized, false, false),
            Self::SwitchCql => (false, ExplorationMode::Independent, false, false),
            Self::Macql => (false, ExplorationMode::Independent, true, false),
            Self::Qmix => (false, ExplorationMode::Independent, false, true),
        };
        Preset {
            memory,
            explore,
            online_cql,
            from_scratch,
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ovmse => "ovmse",
            Self::Ovm => "ovm",
            Self::Se => "se",
            Self::SwitchCql => "switch-cql",
            Self::Macql => "macql",
            Self::Qmix => "qmix",
        })
    }
}

/// Every key with its one-line description, in snapshot order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed of the run"),
    ("seeds", "comma-separated seeds for multi-seed commands"),
    ("env.name", "gridworld | matrix"),
    ("env.grid_size", "gridworld side length"),
    ("env.n_agents", "gridworld agent count"),
    ("env.horizon", "gridworld episode cap T"),
    ("env.gamma", "discount"),
    ("net.hidden_dim", "agent network hidden width"),
    ("net.mixing_hidden_dim", "mixer hidden width"),
    ("net.window", "history window k"),
    ("net.agent_id", "append one-hot agent id (true | false)"),
    ("optim.lr", "learning rate"),
    ("optim.beta1", "first-moment decay"),
    ("optim.beta2", "second-moment decay"),
    ("optim.eps", "denominator stabiliser"),
    ("optim.grad_clip", "global gradient-norm cap, 0 disables"),
    ("train.batch_size", "episodes per update"),
    ("train.sync_interval", "updates between target syncs"),
    ("train.buffer_capacity", "replay capacity in episodes"),
    ("train.warmup_episodes", "episodes collected before the first update"),
    ("train.updates_per_episode", "learner updates after each episode"),
    ("dataset.path", "offline dataset file"),
    ("dataset.mode", "medium | medium-replay"),
    ("dataset.episodes", "episodes collected in medium mode"),
    ("dataset.epsilon", "exploration rate while collecting medium data"),
    ("dataset.behavior_max_steps", "env-step budget for training the behaviour policy"),
    ("dataset.behavior_threshold", "fraction of the oracle return that stops behaviour training"),
    ("offline.alpha", "conservative penalty weight"),
    ("offline.steps", "offline gradient steps"),
    ("offline.mu", "uniform | softmax | exhaustive"),
    ("offline.metrics_interval", "updates between metrics rows"),
    ("offline.eval_interval", "updates between greedy evaluations"),
    ("offline.checkpoint_interval", "updates between intermediate checkpoints, 0 disables"),
    ("online.algorithm", "ovmse | ovm | se | switch-cql | macql | qmix"),
    ("online.steps", "environment steps of fine-tuning"),
    ("online.mixing_ratio", "offline share of each batch"),
    ("online.lambda_end", "final memory weight"),
    ("online.lambda_anneal_steps", "env steps to anneal the memory weight, auto = half the phase"),
    ("online.schedule_variant", "clamped | literal"),
    ("online.cql_alpha", "online penalty weight when the algorithm keeps it"),
    ("online.offline_dir", "directory holding the pretrained checkpoints"),
    ("online.snapshot_interval", "env steps between resumable snapshots, 0 disables"),
    ("explore.mode", "auto | independent | sequential_centralized | sequential_decentralized"),
    ("explore.eps_start", "initial exploration rate, auto = 1.0 from scratch else 0.3"),
    ("explore.eps_end", "final exploration rate"),
    ("explore.anneal_steps", "env steps to anneal exploration, auto = a fifth of the phase"),
    ("eval.interval", "env steps between evaluations"),
    ("eval.episodes", "greedy episodes per evaluation"),
    ("eval.seed", "first environment seed used for evaluation"),
    ("diagnose.algorithms", "comma-separated algorithms compared by diagnose"),
    ("diagnose.probe_episodes", "greedy episodes in the probe buffer"),
    ("diagnose.probe_interval", "env steps between probe evaluations"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub env: EnvConfig,
    pub hidden_dim: usize,
    pub mixing_hidden_dim: usize,
    pub window: usize,
    pub agent_id: bool,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub sync_interval: u64,
    pub buffer_capacity: usize,
    pub warmup_episodes: usize,
    pub updates_per_episode: usize,
    pub dataset_path: String,
    pub dataset_mode: DatasetMode,
    pub dataset_episodes: usize,
    pub dataset_epsilon: f64,
    pub behavior_max_steps: u64,
    pub behavior_threshold: f64,
    pub offline_alpha: f64,
    pub offline_steps: u64,
    pub offline_mu: MuMode,
    pub offline_metrics_interval: u64,
    pub offline_eval_interval: u64,
    pub offline_checkpoint_interval: u64,
    pub algorithm: Algorithm,
    pub online_steps: u64,
    pub mixing_ratio: f64,
    pub lambda_end: f64,
    pub lambda_anneal_steps: Option<u64>,
    pub schedule_variant: ScheduleVariant,
    pub online_cql_alpha: f64,
    pub offline_dir: String,
    pub snapshot_interval: u64,
    pub explore_mode: Option<ExplorationMode>,
    pub eps_start: Option<f64>,
    pub eps_end: f64,
    pub anneal_steps: Option<u64>,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub diagnose_algorithms: Vec<Algorithm>,
    pub probe_episodes: usize,
    pub probe_interval: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            env: EnvConfig::default(),
            hidden_dim: 64,
            mixing_hidden_dim: 32,
            window: 1,
            agent_id: true,
            adam: AdamConfig::default(),
            batch_size: 32,
            sync_interval: 200,
            buffer_capacity: 5000,
            warmup_episodes: 32,
            updates_per_episode: 1,
            dataset_path: "dataset.jsonl".into(),
            dataset_mode: DatasetMode::Medium,
            dataset_episodes: 500,
            dataset_epsilon: 0.05,
            behavior_max_steps: 200_000,
            behavior_threshold: 0.5,
            offline_alpha: 1.0,
            offline_steps: 5000,
            offline_mu: MuMode::default(),
            offline_metrics_interval: 100,
            offline_eval_interval: 1000,
            offline_checkpoint_interval: 5000,
            algorithm: Algorithm::Ovmse,
            online_steps: 50_000,
            mixing_ratio: 0.0,
            lambda_end: 0.2,
            lambda_anneal_steps: None,
            schedule_variant: ScheduleVariant::Clamped,
            online_cql_alpha: 1.0,
            offline_dir: "offline".into(),
            snapshot_interval: 0,
            explore_mode: None,
            eps_start: None,
            eps_end: 0.05,
            anneal_steps: None,
            eval_interval: 2000,
            eval_episodes: 64,
            eval_seed: 1_000_000,
            diagnose_algorithms: vec![Algorithm::Ovm, Algorithm::SwitchCql],
            probe_episodes: 64,
            probe_interval: 500,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn show_auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

fn show_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "env.name" => self.env.name = v.to_string(),
            "env.grid_size" => self.env.grid_size = parse(key, v)?,
            "env.n_agents" => self.env.n_agents = parse(key, v)?,
            "env.horizon" => self.env.horizon = parse(key, v)?,
            "env.gamma" => self.env.gamma = parse(key, v)?,
            "net.hidden_dim" => self.hidden_dim = parse(key, v)?,
            "net.mixing_hidden_dim" => self.mixing_hidden_dim = parse(key, v)?,
            "net.window" => self.window = parse(key, v)?,
            "net.agent_id" => self.agent_id = parse(key, v)?,
            "optim.lr" => self.adam.lr = parse(key, v)?,
            "optim.beta1" => self.adam.beta1 = parse(key, v)?,
            "optim.beta2" => self.adam.beta2 = parse(key, v)?,
            "optim.eps" => self.adam.eps = parse(key, v)?,
            "optim.grad_clip" => {
                let c: f64 = parse(key, v)?;
                self.adam.grad_clip = (c > 0.0).then_some(c);
            }
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "train.sync_interval" => self.sync_interval = parse(key, v)?,
            "train.buffer_capacity" => self.buffer_capacity = parse(key, v)?,
            "train.warmup_episodes" => self.warmup_episodes = parse(key, v)?,
            "train.updates_per_episode" => self.updates_per_episode = parse(key, v)?,
            "dataset.path" => self.dataset_path = v.to_string(),
            "dataset.mode" => self.dataset_mode = parse_strict(v)?,
            "dataset.episodes" => self.dataset_episodes = parse(key, v)?,
            "dataset.epsilon" => self.dataset_epsilon = parse(key, v)?,
            "dataset.behavior_max_steps" => self.behavior_max_steps = parse(key, v)?,
            "dataset.behavior_threshold" => self.behavior_threshold = parse(key, v)?,
            "offline.alpha" => self.offline_alpha = parse(key, v)?,
            "offline.steps" => self.offline_steps = parse(key, v)?,
            "offline.mu" => self.offline_mu = parse_strict(v)?,
            "offline.metrics_interval" => self.offline_metrics_interval = parse(key, v)?,
            "offline.eval_interval" => self.offline_eval_interval = parse(key, v)?,
            "offline.checkpoint_interval" => self.offline_checkpoint_interval = parse(key, v)?,
            "online.algorithm" => self.algorithm = parse_strict(v)?,
            "online.steps" => self.online_steps = parse(key, v)?,
            "online.mixing_ratio" => self.mixing_ratio = parse(key, v)?,
            "online.lambda_end" => self.lambda_end = parse(key, v)?,
            "online.lambda_anneal_steps" => self.lambda_anneal_steps = parse_auto(key, v)?,
            "online.schedule_variant" => self.schedule_variant = parse_strict(v)?,
            "online.cql_alpha" => self.online_cql_alpha = parse(key, v)?,
            "online.offline_dir" => self.offline_dir = v.to_string(),
            "online.snapshot_interval" => self.snapshot_interval = parse(key, v)?,
            "explore.mode" => {
                self.explore_mode = if v == "auto" { None } else { Some(parse_strict(v)?) }
            }
            "explore.eps_start" => self.eps_start = parse_auto(key, v)?,
            "explore.eps_end" => self.eps_end = parse(key, v)?,
            "explore.anneal_steps" => self.anneal_steps = parse_auto(key, v)?,
            "eval.interval" => self.eval_interval = parse(key, v)?,
            "eval.episodes" => self.eval_episodes = parse(key, v)?,
            "eval.seed" => self.eval_seed = parse(key, v)?,
            "diagnose.algorithms" => {
                self.diagnose_algorithms = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "diagnose.probe_episodes" => self.probe_episodes = parse(key, v)?,
            "diagnose.probe_interval" => self.probe_interval = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "seeds" => show_list(&self.seeds),
            "env.name" => self.env.name.clone(),
            "env.grid_size" => self.env.grid_size.to_string(),
            "env.n_agents" => self.env.n_agents.to_string(),
            "env.horizon" => self.env.horizon.to_string(),
            "env.gamma" => self.env.gamma.to_string(),
            "net.hidden_dim" => self.hidden_dim.to_string(),
            "net.mixing_hidden_dim" => self.mixing_hidden_dim.to_string(),
            "net.window" => self.window.to_string(),
            "net.agent_id" => self.agent_id.to_string(),
            "optim.lr" => self.adam.lr.to_string(),
            "optim.beta1" => self.adam.beta1.to_string(),
            "optim.beta2" => self.adam.beta2.to_string(),
            "optim.eps" => self.adam.eps.to_string(),
            "optim.grad_clip" => self.adam.grad_clip.unwrap_or(0.0).to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.sync_interval" => self.sync_interval.to_string(),
            "train.buffer_capacity" => self.buffer_capacity.to_string(),
            "train.warmup_episodes" => self.warmup_episodes.to_string(),
            "train.updates_per_episode" => self.updates_per_episode.to_string(),
            "dataset.path" => self.dataset_path.clone(),
            "dataset.mode" => self.dataset_mode.to_string(),
            "dataset.episodes" => self.dataset_episodes.to_string(),
            "dataset.epsilon" => self.dataset_epsilon.to_string(),
            "dataset.behavior_max_steps" => self.behavior_max_steps.to_string(),
            "dataset.behavior_threshold" => self.behavior_threshold.to_string(),
            "offline.alpha" => self.offline_alpha.to_string(),
            "offline.steps" => self.offline_steps.to_string(),
            "offline.mu" => self.offline_mu.to_string(),
            "offline.metrics_interval" => self.offline_metrics_interval.to_string(),
            "offline.eval_interval" => self.offline_eval_interval.to_string(),
            "offline.checkpoint_interval" => self.offline_checkpoint_interval.to_string(),
            "online.algorithm" => self.algorithm.to_string(),
            "online.steps" => self.online_steps.to_string(),
            "online.mixing_ratio" => self.mixing_ratio.to_string(),
            "online.lambda_end" => self.lambda_end.to_string(),
            "online.lambda_anneal_steps" => show_auto(&self.lambda_anneal_steps),
            "online.schedule_variant" => self.schedule_variant.to_string(),
            "online.cql_alpha" => self.online_cql_alpha.to_string(),
            "online.offline_dir" => self.offline_dir.clone(),
            "online.snapshot_interval" => self.snapshot_interval.to_string(),
            "explore.mode" => show_auto(&self.explore_mode),
            "explore.eps_start" => show_auto(&self.eps_start),
            "explore.eps_end" => self.eps_end.to_string(),
            "explore.anneal_steps" => show_auto(&self.anneal_steps),
            "eval.interval" => self.eval_interval.to_string(),
            "eval.episodes" => self.eval_episodes.to_string(),
            "eval.seed" => self.eval_seed.to_string(),
            "diagnose.algorithms" => show_list(&self.diagnose_algorithms),
            "diagnose.probe_episodes" => self.probe_episodes.to_string(),
            "diagnose.probe_interval" => self.probe_interval.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("documented key")))
            .collect()
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn preset(&self) -> Preset {
        self.algorithm.preset()
    }

    pub fn exploration_mode(&self) -> ExplorationMode {
        self.explore_mode.unwrap_or(self.preset().explore)
    }

    /// ε schedule for a phase of `phase_steps` environment steps.
    pub fn epsilon_schedule(&self, from_scratch: bool, phase_steps: u64) -> Schedule {
        let start = self
            .eps_start
            .unwrap_or(if from_scratch { 1.0 } else { 0.3 });
        let duration = self.anneal_steps.unwrap_or(phase_steps / 5);
        Schedule::new(start, self.eps_end, duration).with_variant(self.schedule_variant)
    }

    /// Memory-weight schedule; identically zero when the algorithm has no memory.
    pub fn lambda_schedule(&self) -> Schedule {
        if !self.preset().memory {
            return Schedule::constant(0.0);
        }
        let duration = self.lambda_anneal_steps.unwrap_or(self.online_steps / 2);
        Schedule::new(1.0, self.lambda_end, duration).with_variant(self.schedule_variant)
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.sync_interval == 0 || self.updates_per_episode == 0 {
            return Err(Error::Config(
                "batch size, sync interval and updates per episode must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mixing_ratio) {
            return Err(Error::Config("online.mixing_ratio outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_end) {
            return Err(Error::Config("online.lambda_end outside [0, 1]".into()));
        }
        for e in [Some(self.eps_end), self.eps_start, Some(self.dataset_epsilon)]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("exploration rate {e} outside [0, 1]")));
            }
        }
        if self.offline_alpha < 0.0 {
            return Err(Error::Config("offline.alpha must be >= 0".into()));
        }
        if self.eval_interval == 0 || self.probe_interval == 0 {
            return Err(Error::Config("evaluation and probe intervals must be positive".into()));
        }
        Ok(())
    }
}

fn parse_strict<T: FromStr<Err = Error>>(v: &str) -> Result<T> {
    v.parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = RunConfig::default();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        for (k, _) in KEYS {
            let v = cfg.get(k).unwrap();
            let mut c = RunConfig::default();
            c.set(k, &v).unwrap();
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("online.lamda_end", "0.1"), Err(Error::Config(_))));
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nenv.name = matrix\nonline.algorithm=qmix\n")
            .unwrap();
        cfg.apply_override("explore.eps_start=0.7").unwrap();
        assert_eq!(cfg.env.name, "matrix");
        assert_eq!(cfg.algorithm, Algorithm::Qmix);
        assert_eq!(cfg.eps_start, Some(0.7));
        assert_eq!(cfg.get("explore.anneal_steps").unwrap(), "auto");
    }

    #[test]
    fn presets_drive_schedules() {
        let mut cfg = RunConfig::default();
        cfg.set("online.algorithm", "switch-cql").unwrap();
        assert_eq!(cfg.lambda_schedule().value(0), 0.0);
        assert_eq!(cfg.exploration_mode(), ExplorationMode::Independent);
        cfg.set("online.algorithm", "ovmse").unwrap();
        cfg.set("online.steps", "1000").unwrap();
        let lam = cfg.lambda_schedule();
        assert_eq!((lam.value(0), lam.duration), (1.0, 500));
        assert_eq!(cfg.epsilon_schedule(false, 1000).value(0), 0.3);
        assert_eq!(cfg.epsilon_schedule(true, 1000).duration, 200);
    }
}
