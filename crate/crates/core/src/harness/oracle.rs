//! Exhaustive-search upper bound: every window, each allocation is tried on
//! a clone of the environment (same queues, same RNG state, hence the same
//! arrivals) and the best one is committed.

use rayon::prelude::*;

use crate::env::{EnvConfig, SlicingEnv};
use crate::error::Result;
use crate::seeding::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best reward of each window.
    pub rewards: Vec<f64>,
    /// Committed (best) action of each window.
    pub actions: Vec<usize>,
    pub average: f64,
}

/// Frozen replay: the oracle trajectory plus, for every window, the state
/// observed before acting and the reward each action would have earned.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReplay {
    pub result: OracleResult,
    pub states: Vec<Vec<f64>>,
    pub action_rewards: Vec<Vec<f64>>,
}

impl OracleReplay {
    /// Per-window rewards of a policy evaluated on the frozen snapshots.
    pub fn evaluate(&self, mut policy: impl FnMut(&[f64]) -> Result<usize>) -> Result<Vec<f64>> {
        self.states
            .iter()
            .zip(&self.action_rewards)
            .map(|(s, row)| policy(s).map(|a| row[a]))
            .collect()
    }
}

/// Environment seed used by both the oracle and a run with the same `seed`,
/// so both see the same traffic realization.
pub fn env_seed(seed: u64) -> u64 {
    seeding::mix(seed, stream::ENV)
}

pub fn oracle_replay(env_config: &EnvConfig, seed: u64, n_windows: u64) -> Result<OracleReplay> {
    let mut env = SlicingEnv::new(env_config.clone())?;
    let mut state = env.reset(env_seed(seed)).kappa;
    let n_actions = env.action_space().len();
    let mut out = OracleReplay {
        result: OracleResult {
            rewards: Vec::with_capacity(n_windows as usize),
            actions: Vec::with_capacity(n_windows as usize),
            average: 0.0,
        },
        states: Vec::with_capacity(n_windows as usize),
        action_rewards: Vec::with_capacity(n_windows as usize),
    };
    for _ in 0..n_windows {
        let candidates = (0..n_actions)
            .into_par_iter()
            .map(|a| {
                let mut trial = env.clone();
                trial.step(a).map(|o| (trial, o))
            })
            .collect::<Result<Vec<_>>>()?;
        let rewards: Vec<f64> = candidates.iter().map(|(_, o)| o.reward).collect();
        let best = crate::drl::argmax(&rewards);
        let (next_env, outcome) = candidates.into_iter().nth(best).expect("in range");
        out.states.push(std::mem::replace(&mut state, outcome.state.kappa));
        out.result.rewards.push(outcome.reward);
        out.result.actions.push(best);
        out.action_rewards.push(rewards);
        env = next_env;
    }
    out.result.average = super::metrics::mean(&out.result.rewards);
    Ok(out)
}

pub fn oracle_best_reward(env_config: &EnvConfig, seed: u64, n_windows: u64) -> Result<OracleResult> {
    oracle_replay(env_config, seed, n_windows).map(|r| r.result)
}
