use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{run_episode, ActionValueSource, Env};
use crate::error::{Error, Result};
use crate::exploration::Explorer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Population standard deviation of episode returns.
    pub std_return: f64,
}

/// Greedy rollouts on seeds `seed, seed+1, …, seed+n-1`.
pub fn evaluate(
    policy: &dyn ActionValueSource,
    env: &mut dyn Env,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let mut explorer = Explorer::greedy();
    // with ε = 0 the coin flips never change an action
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut returns = Vec::with_capacity(n_episodes);
    let mut wins = 0usize;
    for k in 0..n_episodes as u64 {
        let ep = run_episode(env, policy, &mut explorer, &mut rng, seed + k)?;
        wins += usize::from(ep.success);
        returns.push(ep.episode_return);
    }
    let n = n_episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalStats {
        episodes: n_episodes,
        mean_return: mean,
        success_rate: wins as f64 / n,
        std_return: var.sqrt(),
    })
}
