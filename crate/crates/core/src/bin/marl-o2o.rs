use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use marl_o2o::harness::config::KEYS;
use marl_o2o::harness::phases::{
    diagnose_unlearning, gen_dataset, load_sources, run_offline_phase, run_online_phase,
};
use marl_o2o::harness::plot::write_svg;
use marl_o2o::harness::{evaluate, read_metrics, success_auc, RunConfig};
use marl_o2o::networks::QmixNet;
use marl_o2o::replay::Dataset;
use marl_o2o::{Error, Result};

#[derive(Parser)]
#[command(name = "marl-o2o", version, about = "Offline-to-online cooperative MARL lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/out")]
    out: PathBuf,
    /// `key=value`, applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a behaviour policy and write a medium or medium-replay dataset.
    GenDataset(Common),
    /// Conservative offline pre-training on a dataset.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Online fine-tuning from pretrained artifacts (or from scratch).
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Directory holding policy.ckpt and offline_target.ckpt.
        #[arg(long)]
        offline: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Snapshot directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Track probe-buffer Q values under each configured arm.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        offline: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Median/IQR learning curves from metrics files, as SVG.
    Plot {
        /// `LABEL=PATH`; repeat a label to add seeds.
        series: Vec<String>,
        #[arg(long, default_value = "success_rate")]
        column: String,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
    /// List every configuration key.
    Keys,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut config = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &c.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn plot(series: &[String], column: &str, out: &Path) -> Result<()> {
    let mut grouped: Vec<(String, Vec<_>)> = Vec::new();
    for s in series {
        let (label, path) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("expected LABEL=PATH, got {s:?}")))?;
        let rows = read_metrics(Path::new(path))?;
        match grouped.iter_mut().find(|(l, _)| l == label) {
            Some((_, runs)) => runs.push(rows),
            None => grouped.push((label.to_string(), vec![rows])),
        }
    }
    for (label, runs) in &grouped {
        let aucs: Vec<String> = runs.iter().map(|r| format!("{:.1}", success_auc(r))).collect();
        println!("{label}: success AUC per run [{}]", aucs.join(", "));
    }
    write_svg(out, &grouped, column)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset(common) => {
            let config = load_config(&common)?;
            let r = gen_dataset(&config, &common.out)?;
            if !r.reached_threshold {
                eprintln!(
                    "warning: behaviour policy never reached {:.3}; using the final policy",
                    r.threshold_return
                );
            }
            println!(
                "dataset {} ({} episodes, mean return {:.4}, behaviour steps {}) sha256 {}",
                r.path.display(),
                r.dataset.len(),
                r.dataset.meta.behavior_mean_return,
                r.behavior_steps,
                r.hash
            );
        }
        Command::Pretrain { common, dataset } => {
            let config = load_config(&common)?;
            let data = Dataset::load(&dataset)?;
            let r = run_offline_phase(&config, &data, &common.out)?;
            println!(
                "policy {} sha256 {}\noffline target {} sha256 {}\nfinal eval return {:.4} success {:.3}",
                r.artifacts.policy.display(),
                r.artifacts.policy_hash,
                r.artifacts.offline_target.display(),
                r.artifacts.offline_target_hash,
                r.final_eval.mean_return,
                r.final_eval.success_rate
            );
        }
        Command::Finetune { common, offline, dataset, resume } => {
            let config = load_config(&common)?;
            let sources = load_sources(&config, offline.as_deref(), dataset.as_deref())?;
            let run = run_online_phase(&config, sources, &common.out, resume.as_deref())?;
            let last = run.rows.last().expect("at least the step-0 row");
            println!(
                "{} finished at {} env steps; final return {:.4} success {:.3}; success AUC {:.1}",
                config.algorithm,
                run.t_env,
                last.episode_return_mean.unwrap_or(f64::NAN),
                last.success_rate.unwrap_or(f64::NAN),
                success_auc(&run.rows)
            );
        }
        Command::Diagnose { common, offline, dataset } => {
            let config = load_config(&common)?;
            let mut cfg = config.clone();
            cfg.algorithm = marl_o2o::harness::Algorithm::Ovm;
            let sources = load_sources(&cfg, Some(&offline), dataset.as_deref())?;
            let d = diagnose_unlearning(&config, &sources, Some(&common.out))?;
            println!("probe sha256 {} offline mean Q {:.4}", d.probe_hash, d.offline_probe_mean);
            for (alg, curve) in &d.curves {
                let min = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                println!("{alg}: min probe mean Q {min:.4}");
            }
        }
        Command::Eval { common, checkpoint } => {
            let config = load_config(&common)?;
            let net = QmixNet::load(&checkpoint)?;
            let mut env = config.env.build()?;
            net.arch.check_spec(env.spec())?;
            let s = evaluate(&net, env.as_mut(), config.eval_episodes, config.eval_seed)?;
            println!(
                "episodes {} mean return {:.4} std {:.4} success {:.3}",
                s.episodes, s.mean_return, s.std_return, s.success_rate
            );
        }
        Command::Plot { series, column, out } => plot(&series, &column, &out)?,
        Command::Keys => {
            let defaults = RunConfig::default();
            for (key, doc) in KEYS {
                let v = defaults.get(key).unwrap_or_default();
                println!("{key:<32} {v:<24} {doc}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
