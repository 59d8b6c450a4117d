//! The pipeline stages driven by the command-line tool: dataset
//! generation, offline pre-training, online fine-tuning and the
//! unlearning diagnostic.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::config::{Algorithm, RunConfig};
use super::eval::{evaluate, EvalStats};
use super::metrics::{write_metrics, MetricsRow};
use super::rng::{stream_rng, Stream};
use super::run::{build_arch, OnlineRun, OnlineSources};
use crate::checkpoint::{file_sha256, sha256_hex};
use crate::env::{run_episode, EnvConfig, GridWorld};
use crate::error::{Error, Result};
use crate::exploration::{ExplorationMode, Explorer, Schedule};
use crate::learner::{
    OfflineArtifacts, OfflineConfig, OfflineLearner, OFFLINE_TARGET_FILE, POLICY_FILE,
};
use crate::networks::QmixNet;
use crate::oracle::{solve_gridworld, solve_matrix_game};
use crate::replay::{
    Batch, Dataset, DatasetMeta, DatasetMode, EpisodeRecord, MixingRatioSampler, ReplayBuffer,
    DATASET_FORMAT_VERSION,
};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const BEHAVIOR_FILE: &str = "behavior.ckpt";
pub const FINAL_FILE: &str = "final.ckpt";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `key = value` lines naming every artifact a phase wrote, with hashes.
pub fn write_manifest(dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn eval_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.eval_episodes as u64)
        .map(|i| config.eval_seed + i)
        .collect()
}

/// Mean optimal return over the evaluation spawn seeds.
pub fn oracle_optimum(env: &EnvConfig, seeds: &[u64]) -> Result<f64> {
    match env.name.as_str() {
        "matrix" => {
            let payoff: Vec<Vec<f64>> = crate::env::FIXTURE_PAYOFF
                .iter()
                .map(|r| r.to_vec())
                .collect();
            Ok(solve_matrix_game(&payoff)?.optimal_return)
        }
        "gridworld" => {
            let grid = env.grid_config();
            let world = GridWorld::new(grid.clone())?;
            solve_gridworld(&grid)?.mean_optimal_return(&world, seeds)
        }
        other => Err(Error::Config(format!("unknown environment {other:?}"))),
    }
}

/// Mean return of the uniform random policy over the given seeds.
pub fn random_policy_return(env: &EnvConfig, seeds: &[u64], rng_seed: u64) -> Result<f64> {
    let mut env = env.build()?;
    let spec = *env.spec();
    let mut rng = stream_rng(rng_seed, Stream::Collect);
    let mut total = 0.0;
    for &seed in seeds {
        let mut obs = env.reset(seed);
        for _ in 0..spec.horizon {
            let joint: Vec<usize> = obs
                .avail
                .iter()
                .map(|mask| {
                    let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
                    legal[rng.random_range(0..legal.len())]
                })
                .collect();
            let out = env.step(&joint)?;
            total += out.reward;
            if out.terminated || out.truncated {
                break;
            }
            obs = out.next;
        }
    }
    Ok(total / seeds.len() as f64)
}

#[derive(Debug, Clone)]
pub struct DatasetReport {
    pub dataset: Dataset,
    pub path: PathBuf,
    pub hash: String,
    pub behavior_hash: String,
    /// Environment steps the behaviour policy trained for.
    pub behavior_steps: u64,
    pub threshold_return: f64,
    /// False when training ran out of steps before reaching the threshold.
    pub reached_threshold: bool,
    pub optimum: f64,
}

/// Trains a behaviour policy from scratch until its greedy evaluation
/// return first reaches `behavior_threshold` of the oracle optimum, then
/// builds a medium or medium-replay dataset from it.
pub fn gen_dataset(config: &RunConfig, out: &Path) -> Result<DatasetReport> {
    ensure_dir(out)?;
    let mut behav_cfg = config.clone();
    behav_cfg.algorithm = Algorithm::Qmix;
    behav_cfg.mixing_ratio = 0.0;
    let optimum = oracle_optimum(&config.env, &eval_seeds(config))?;
    let threshold_return = config.behavior_threshold * optimum;

    let mut run = OnlineRun::new(&behav_cfg, OnlineSources::default(), config.behavior_max_steps)?;
    let mut reached = false;
    let mut seen = 0;
    while run.t_env < config.behavior_max_steps && !reached {
        run.step_episode()?;
        reached = run.rows[seen..].iter().any(|r| {
            r.step > 0 && r.episode_return_mean.is_some_and(|v| v >= threshold_return)
        });
        seen = run.rows.len();
    }
    let behavior_path = out.join(BEHAVIOR_FILE);
    let behavior_hash = run.live().save(&behavior_path)?;
    run.write_metrics(&out.join("behavior_metrics.csv"))?;

    let episodes: Vec<EpisodeRecord> = match config.dataset_mode {
        DatasetMode::MediumReplay => run.buffer.iter().cloned().collect(),
        DatasetMode::Medium => {
            let mut env = config.env.build()?;
            let mut rng = stream_rng(config.seed, Stream::Collect);
            let mut explorer = Explorer::new(
                ExplorationMode::Independent,
                Schedule::constant(config.dataset_epsilon),
            );
            (0..config.dataset_episodes)
                .map(|_| {
                    let seed = rng.random::<u64>();
                    run_episode(env.as_mut(), run.live(), &mut explorer, &mut rng, seed)
                })
                .collect::<Result<_>>()?
        }
    };
    let spec = *config.env.build()?.spec();
    let mut dataset = Dataset {
        meta: DatasetMeta {
            format_version: DATASET_FORMAT_VERSION,
            env: config.env.fixture_tag(),
            n_agents: spec.n_agents,
            state_dim: spec.state_dim,
            obs_dim: spec.obs_dim,
            action_dim: spec.action_dim,
            horizon: spec.horizon,
            gamma: spec.gamma,
            mode: config.dataset_mode.to_string(),
            behavior_checkpoint: behavior_hash.clone(),
            behavior_mean_return: 0.0,
            episodes: episodes.len(),
        },
        episodes,
    };
    dataset.meta.behavior_mean_return = dataset.mean_return();
    let path = out.join(DATASET_FILE);
    let hash = dataset.save(&path)?;
    config.write_snapshot(out)?;
    write_manifest(
        out,
        &[
            ("dataset", DATASET_FILE.to_string()),
            ("dataset.sha256", hash.clone()),
            ("behavior", BEHAVIOR_FILE.to_string()),
            ("behavior.sha256", behavior_hash.clone()),
            ("behavior.steps", run.t_env.to_string()),
            ("behavior.reached_threshold", reached.to_string()),
        ],
    )?;
    Ok(DatasetReport {
        dataset,
        path,
        hash,
        behavior_hash,
        behavior_steps: run.t_env,
        threshold_return,
        reached_threshold: reached,
        optimum,
    })
}

#[derive(Debug, Clone)]
pub struct OfflineReport {
    pub artifacts: OfflineArtifacts,
    pub rows: Vec<MetricsRow>,
    pub final_eval: EvalStats,
}

/// Conservative pre-training on a fixed dataset.
pub fn run_offline_phase(config: &RunConfig, dataset: &Dataset, out: &Path) -> Result<OfflineReport> {
    config.validate()?;
    ensure_dir(out)?;
    let mut eval_env = config.env.build()?;
    let spec = *eval_env.spec();
    dataset.meta.check_spec(&spec)?;
    let arch = build_arch(config, eval_env.as_ref());
    let net = QmixNet::new(arch, &mut stream_rng(config.seed, Stream::Init))?;
    let offline = OfflineConfig {
        alpha: config.offline_alpha,
        batch_size: config.batch_size,
        steps: config.offline_steps,
        sync_interval: config.sync_interval,
        mu: config.offline_mu,
        gamma: spec.gamma,
        adam: config.adam,
    };
    let mut learner = OfflineLearner::new(net, offline, stream_rng(config.seed, Stream::Cql))?;
    let sampler = MixingRatioSampler::new(1.0)?;
    let no_online = ReplayBuffer::new(1)?;
    let mut batch_rng = stream_rng(config.seed, Stream::Batch);
    let layout = arch.layout();
    let ckpt_dir = out.join("checkpoints");

    let eval_row = |net: &QmixNet, env: &mut dyn crate::env::Env, step: u64, loss: Option<f64>, q: Option<f64>| -> Result<MetricsRow> {
        let stats = evaluate(net, env, config.eval_episodes, config.eval_seed)?;
        Ok(MetricsRow {
            step,
            episode_return_mean: Some(stats.mean_return),
            success_rate: Some(stats.success_rate),
            loss,
            q_probe_mean: q,
            ..MetricsRow::default()
        })
    };
    let mut rows = vec![eval_row(&learner.pair.live, eval_env.as_mut(), 0, None, None)?];
    let (mut loss_sum, mut q_sum, mut n) = (0.0, 0.0, 0u64);
    for u in 1..=config.offline_steps {
        let sample = sampler.sample(Some(dataset), &no_online, config.batch_size, &mut batch_rng)?;
        let batch = Batch::from_episodes(&sample.episodes, layout, arch.action_dim)?;
        let m = learner.update(&batch)?;
        loss_sum += m.loss;
        q_sum += m.q_mean;
        n += 1;
        let eval_due = u % config.offline_eval_interval == 0 || u == config.offline_steps;
        if u % config.offline_metrics_interval == 0 || eval_due {
            let loss = Some(loss_sum / n as f64);
            let q = Some(q_sum / n as f64);
            let row = if eval_due {
                eval_row(&learner.pair.live, eval_env.as_mut(), u, loss, q)?
            } else {
                MetricsRow { step: u, loss, q_probe_mean: q, ..MetricsRow::default() }
            };
            rows.push(row);
            (loss_sum, q_sum, n) = (0.0, 0.0, 0);
        }
        if config.offline_checkpoint_interval > 0 && u % config.offline_checkpoint_interval == 0 {
            ensure_dir(&ckpt_dir)?;
            learner.pair.live.save(&ckpt_dir.join(format!("step-{u}.ckpt")))?;
        }
    }
    let final_eval = evaluate(&learner.pair.live, eval_env.as_mut(), config.eval_episodes, config.eval_seed)?;
    let artifacts = learner.export(out)?;
    write_metrics(&out.join("metrics.csv"), &rows)?;
    config.write_snapshot(out)?;
    write_manifest(
        out,
        &[
            ("dataset.sha256", sha256_hex(&dataset.to_bytes()?)),
            ("policy", POLICY_FILE.to_string()),
            ("policy.sha256", artifacts.policy_hash.clone()),
            ("offline_target", OFFLINE_TARGET_FILE.to_string()),
            ("offline_target.sha256", artifacts.offline_target_hash.clone()),
        ],
    )?;
    Ok(OfflineReport { artifacts, rows, final_eval })
}

/// Loads the pretrained networks from an offline output directory, and
/// the dataset when the mixing ratio needs it.
pub fn load_sources(config: &RunConfig, offline_dir: Option<&Path>, dataset: Option<&Path>) -> Result<OnlineSources> {
    let mut sources = OnlineSources::default();
    if !config.preset().from_scratch {
        let dir = offline_dir.ok_or_else(|| {
            Error::Config(format!("{} needs an offline directory", config.algorithm))
        })?;
        sources.policy = Some(QmixNet::load(&dir.join(POLICY_FILE))?);
        sources.offline_target = Some(QmixNet::load(&dir.join(OFFLINE_TARGET_FILE))?);
    }
    if config.mixing_ratio > 0.0 {
        let path = dataset.ok_or_else(|| {
            Error::Config("a positive mixing ratio needs a dataset path".into())
        })?;
        sources.dataset = Some(Dataset::load(path)?);
    }
    Ok(sources)
}

/// Online fine-tuning. With `resume`, continues from a snapshot directory
/// written by an earlier run of the same configuration.
pub fn run_online_phase(
    config: &RunConfig,
    sources: OnlineSources,
    out: &Path,
    resume: Option<&Path>,
) -> Result<OnlineRun> {
    ensure_dir(out)?;
    let mut run = match resume {
        Some(dir) => OnlineRun::resume(config, sources, config.online_steps, dir)?,
        None => OnlineRun::new(config, sources, config.online_steps)?,
    };
    run.snapshots_to(&out.join("snapshots"));
    run.run()?;
    run.write_metrics(&out.join("metrics.csv"))?;
    let hash = run.live().save(&out.join(FINAL_FILE))?;
    config.write_snapshot(out)?;
    write_manifest(
        out,
        &[
            ("metrics", "metrics.csv".to_string()),
            ("final", FINAL_FILE.to_string()),
            ("final.sha256", hash),
            ("metrics.sha256", file_sha256(&out.join("metrics.csv"))?),
        ],
    )?;
    Ok(run)
}

/// Greedy rollouts of `policy` used as the frozen probe buffer.
pub fn build_probe(policy: &QmixNet, env: &EnvConfig, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
    let mut env = env.build()?;
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut explorer = Explorer::greedy();
    (0..episodes)
        .map(|_| {
            let s = rng.random::<u64>();
            run_episode(env.as_mut(), policy, &mut explorer, &mut rng, s)
        })
        .collect()
}

pub fn probe_hash(episodes: &[EpisodeRecord]) -> Result<String> {
    let mut buf = Vec::new();
    for ep in episodes {
        serde_json::to_writer(&mut buf, ep).map_err(|e| Error::Config(format!("probe episode: {e}")))?;
        buf.push(b'\n');
    }
    Ok(sha256_hex(&buf))
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub probe_hash: String,
    /// Mean `Q_tot` of the pretrained network on the probe buffer.
    pub offline_probe_mean: f64,
    pub curves: Vec<(Algorithm, Vec<(u64, f64)>)>,
    pub rows: Vec<(Algorithm, Vec<MetricsRow>)>,
}

/// Fine-tunes every configured arm from the same pretrained checkpoint and
/// tracks mean `Q_tot` on a shared probe buffer.
pub fn diagnose_unlearning(config: &RunConfig, sources: &OnlineSources, out: Option<&Path>) -> Result<Diagnosis> {
    let policy = sources
        .policy
        .as_ref()
        .ok_or_else(|| Error::Config("the diagnostic needs a pretrained policy".into()))?;
    let episodes = build_probe(policy, &config.env, config.probe_episodes, config.seed)?;
    let hash = probe_hash(&episodes)?;
    let refs: Vec<&EpisodeRecord> = episodes.iter().collect();
    let probe = Batch::from_episodes(&refs, policy.arch.layout(), policy.arch.action_dim)?;
    let q0 = crate::learner::chosen_q_tot(policy, &probe)?;
    let offline_probe_mean = q0.iter().sum::<f64>() / q0.len() as f64;

    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for &alg in &config.diagnose_algorithms {
        let mut cfg = config.clone();
        cfg.algorithm = alg;
        let mut run = OnlineRun::new(&cfg, sources.clone(), cfg.online_steps)?;
        run.set_probe(probe.clone());
        run.run()?;
        if let Some(dir) = out {
            let arm = dir.join(alg.to_string());
            ensure_dir(&arm)?;
            run.write_metrics(&arm.join("metrics.csv"))?;
        }
        curves.push((alg, run.probe_curve.clone()));
        rows.push((alg, run.rows.clone()));
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut text = String::from("step");
        for (alg, _) in &curves {
            text.push(',');
            text.push_str(&alg.to_string());
        }
        text.push('\n');
        let len = curves.iter().map(|(_, c)| c.len()).min().unwrap_or(0);
        for i in 0..len {
            text.push_str(&curves[0].1[i].0.to_string());
            for (_, c) in &curves {
                text.push(',');
                text.push_str(&c[i].1.to_string());
            }
            text.push('\n');
        }
        let path = dir.join("qcurve.csv");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        config.write_snapshot(dir)?;
        write_manifest(
            dir,
            &[
                ("probe.sha256", hash.clone()),
                ("probe.offline_mean", offline_probe_mean.to_string()),
                ("qcurve", "qcurve.csv".to_string()),
            ],
        )?;
    }
    Ok(Diagnosis { probe_hash: hash, offline_probe_mean, curves, rows })
}
