//! QMIX value networks.

mod agent;
mod mixer;

pub use agent::AgentQNet;
pub use mixer::{MixTape, MixingNet};

use std::path::Path;

use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::env::{agent_input_dim, ActionValueSource, DecPomdpSpec, InputLayout};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Architecture hyperparameters; written into every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QmixArch {
    pub n_agents: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden_dim: usize,
    pub mixing_hidden_dim: usize,
    pub window: usize,
    pub agent_id: bool,
}

impl QmixArch {
    pub fn for_spec(spec: &DecPomdpSpec) -> Self {
        Self {
            n_agents: spec.n_agents,
            state_dim: spec.state_dim,
            obs_dim: spec.obs_dim,
            action_dim: spec.action_dim,
            hidden_dim: 64,
            mixing_hidden_dim: 32,
            window: 1,
            agent_id: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        agent_input_dim(
            self.obs_dim,
            self.action_dim,
            self.window,
            self.n_agents,
            self.agent_id,
        )
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout {
            window: self.window,
            agent_id: self.agent_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden_dim == 0 || self.mixing_hidden_dim == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }

    /// Errors unless this architecture fits the environment.
    pub fn check_spec(&self, spec: &DecPomdpSpec) -> Result<()> {
        if (self.n_agents, self.state_dim, self.obs_dim, self.action_dim)
            != (spec.n_agents, spec.state_dim, spec.obs_dim, spec.action_dim)
        {
            return Err(Error::Config(format!(
                "network built for {} agents, state {}, obs {}, actions {}; environment has {}, {}, {}, {}",
                self.n_agents,
                self.state_dim,
                self.obs_dim,
                self.action_dim,
                spec.n_agents,
                spec.state_dim,
                spec.obs_dim,
                spec.action_dim
            )));
        }
        Ok(())
    }

    fn write_meta(&self, ckpt: &mut Checkpoint) {
        ckpt.push_meta("arch.n_agents", self.n_agents);
        ckpt.push_meta("arch.state_dim", self.state_dim);
        ckpt.push_meta("arch.obs_dim", self.obs_dim);
        ckpt.push_meta("arch.action_dim", self.action_dim);
        ckpt.push_meta("arch.hidden_dim", self.hidden_dim);
        ckpt.push_meta("arch.mixing_hidden_dim", self.mixing_hidden_dim);
        ckpt.push_meta("arch.window", self.window);
        ckpt.push_meta("arch.agent_id", self.agent_id);
    }

    fn read_meta(ckpt: &Checkpoint, origin: &Path) -> Result<Self> {
        fn get<T: std::str::FromStr>(ckpt: &Checkpoint, origin: &Path, key: &str) -> Result<T> {
            ckpt.meta(key)
                .ok_or_else(|| Error::format(origin, format!("missing meta key {key}")))?
                .parse()
                .map_err(|_| Error::format(origin, format!("bad value for meta key {key}")))
        }
        Ok(Self {
            n_agents: get(ckpt, origin, "arch.n_agents")?,
            state_dim: get(ckpt, origin, "arch.state_dim")?,
            obs_dim: get(ckpt, origin, "arch.obs_dim")?,
            action_dim: get(ckpt, origin, "arch.action_dim")?,
            hidden_dim: get(ckpt, origin, "arch.hidden_dim")?,
            mixing_hidden_dim: get(ckpt, origin, "arch.mixing_hidden_dim")?,
            window: get(ckpt, origin, "arch.window")?,
            agent_id: get(ckpt, origin, "arch.agent_id")?,
        })
    }
}

/// Argmax over available actions; ties go to the lowest index.
pub fn greedy_action(values: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (a, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(a);
        }
    }
    best.ok_or_else(|| Error::Contract("agent has no available action".into()))
}

/// Per-agent masked argmax. Under a monotonic mixer this maximises `Q_tot`.
pub fn greedy_joint_action(values: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<Vec<usize>> {
    if values.len() != masks.len() {
        return Err(Error::Shape(format!(
            "{} value rows vs {} masks",
            values.len(),
            masks.len()
        )));
    }
    values
        .iter()
        .zip(masks)
        .map(|(v, m)| greedy_action(v, m))
        .collect()
}

/// Shared agent network plus mixer, all parameters in one set.
#[derive(Debug, Clone, PartialEq)]
pub struct QmixNet {
    pub arch: QmixArch,
    pub params: ParamSet,
    pub agent: AgentQNet,
    pub mixer: MixingNet,
}

impl QmixNet {
    pub fn new<R: Rng>(arch: QmixArch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new();
        let agent = AgentQNet::new(
            &mut params,
            arch.input_dim(),
            arch.hidden_dim,
            arch.action_dim,
            rng,
        )?;
        let mixer = MixingNet::new(
            &mut params,
            arch.n_agents,
            arch.state_dim,
            arch.mixing_hidden_dim,
            rng,
        )?;
        Ok(Self {
            arch,
            params,
            agent,
            mixer,
        })
    }

    pub fn from_params(arch: QmixArch, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        let agent = AgentQNet::bind(&params, arch.input_dim(), arch.hidden_dim, arch.action_dim)?;
        let mixer = MixingNet::bind(&params, arch.n_agents, arch.state_dim, arch.mixing_hidden_dim)?;
        Ok(Self {
            arch,
            params,
            agent,
            mixer,
        })
    }

    /// Per-agent action values for `[rows x input]` agent inputs.
    pub fn agent_values(&self, inputs: &Tensor) -> Result<Tensor> {
        self.agent.infer(&self.params, inputs)
    }

    /// `Q_tot` for given per-agent chosen values and states.
    pub fn mix(&self, qs: &Tensor, states: &Tensor) -> Result<Vec<f64>> {
        self.mixer.infer(&self.params, qs, states)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new().with_meta("kind", "qmix");
        self.arch.write_meta(&mut ckpt);
        ckpt.push_meta("step_count", self.params.step_count());
        for (name, p) in self.params.iter() {
            ckpt.insert(name, p.value.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, origin: &Path) -> Result<Self> {
        if ckpt.meta("kind") != Some("qmix") {
            return Err(Error::format(origin, "not a qmix checkpoint"));
        }
        let arch = QmixArch::read_meta(ckpt, origin)?;
        let mut params = ParamSet::new();
        for (name, t) in &ckpt.tensors {
            params.add(name.clone(), t.clone())?;
        }
        let steps: u64 = ckpt
            .require_meta("step_count")?
            .parse()
            .map_err(|_| Error::format(origin, "bad step_count"))?;
        params.set_step_count(steps);
        let net = Self::from_params(arch, params)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        if net.params.len() != ckpt.tensors.len() {
            return Err(Error::format(origin, "unexpected extra tensors"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, path)
    }
}

impl ActionValueSource for QmixNet {
    fn layout(&self) -> InputLayout {
        self.arch.layout()
    }

    fn action_values(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let out = self.agent_values(&Tensor::from_rows(inputs)?)?;
        Ok((0..out.rows()).map(|r| out.row(r).to_vec()).collect())
    }
}

/// Live network and its periodically synchronised target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub live: QmixNet,
    pub target: QmixNet,
    pub sync_interval: u64,
    updates: u64,
}

impl TargetPair {
    pub fn new(live: QmixNet, sync_interval: u64) -> Result<Self> {
        if sync_interval == 0 {
            return Err(Error::Config("target sync interval must be positive".into()));
        }
        Ok(Self {
            target: live.clone(),
            live,
            sync_interval,
            updates: 0,
        })
    }

    /// Pair with an explicit target, e.g. when resuming from checkpoints.
    pub fn with_target(live: QmixNet, target: QmixNet, sync_interval: u64) -> Result<Self> {
        live.params.check_same_layout(&target.params)?;
        if live.arch != target.arch {
            return Err(Error::Config("live and target architectures differ".into()));
        }
        let mut pair = Self::new(live, sync_interval)?;
        pair.target = target;
        Ok(pair)
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub(crate) fn set_updates(&mut self, n: u64) {
        self.updates = n;
    }

    pub fn sync(&mut self) {
        self.target
            .params
            .copy_values_from(&self.live.params)
            .expect("target mirrors live layout");
    }

    /// Counts one learner update; syncs on every `sync_interval`-th.
    /// Returns whether a sync happened.
    pub fn record_update(&mut self) -> bool {
        self.updates += 1;
        let due = self.updates % self.sync_interval == 0;
        if due {
            self.sync();
        }
        due
    }
}
