#![allow(dead_code)]

use marl_o2o::env::{run_episode, EnvConfig};
use marl_o2o::exploration::{ExplorationMode, Explorer, Schedule};
use marl_o2o::harness::RunConfig;
use marl_o2o::networks::{QmixArch, QmixNet};
use marl_o2o::replay::{Batch, EpisodeRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_grid() -> EnvConfig {
    EnvConfig {
        name: "gridworld".into(),
        grid_size: 5,
        n_agents: 2,
        horizon: 20,
        gamma: 0.99,
    }
}

pub fn small_grid_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.env = small_grid();
    c.eval_episodes = 32;
    c.eval_interval = 1000;
    c.dataset_episodes = 200;
    c.behavior_max_steps = 60_000;
    c
}

pub fn net_for(env: &EnvConfig, hidden: usize, mixing: usize, seed: u64) -> QmixNet {
    let e = env.build().unwrap();
    let arch = QmixArch {
        hidden_dim: hidden,
        mixing_hidden_dim: mixing,
        ..QmixArch::for_spec(e.spec())
    };
    QmixNet::new(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Uniform-random episodes recorded through `policy`'s input layout.
pub fn random_episodes(env: &EnvConfig, policy: &QmixNet, n: usize, seed: u64) -> Vec<EpisodeRecord> {
    let mut e = env.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut explorer = Explorer::new(ExplorationMode::Independent, Schedule::constant(1.0));
    (0..n)
        .map(|_| {
            let s = rng.random::<u64>();
            run_episode(e.as_mut(), policy, &mut explorer, &mut rng, s).unwrap()
        })
        .collect()
}

pub fn batch_of(net: &QmixNet, episodes: &[EpisodeRecord]) -> Batch {
    let refs: Vec<&EpisodeRecord> = episodes.iter().collect();
    Batch::from_episodes(&refs, net.arch.layout(), net.arch.action_dim).unwrap()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn params_bits(net: &QmixNet) -> Vec<u64> {
    net.params.flat_values().iter().map(|v| v.to_bits()).collect()
}
