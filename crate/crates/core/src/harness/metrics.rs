//! Per-run metrics: start reward, variance, convergence against the oracle
//! and normalized average reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::SourceCounts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    /// K: steps averaged for the initial reward.
    pub initial_window: usize,
    /// W: trailing window of the convergence moving average.
    pub convergence_window: usize,
    /// κ: fraction of the oracle average that counts as converged.
    pub convergence_fraction: f64,
    /// Oracle horizon in windows; 0 means the run length.
    pub oracle_windows: u64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            initial_window: 100,
            convergence_window: 200,
            convergence_fraction: 0.9,
            oracle_windows: 0,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.initial_window == 0
            || self.convergence_window == 0
            || !(self.convergence_fraction > 0.0 && self.convergence_fraction <= 1.0)
        {
            return Err(Error::Config(format!("invalid metric parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub initial_reward: f64,
    pub reward_variance: f64,
    /// Step count (1-based) at which the sustained convergence began.
    pub steps_to_converge: Option<u64>,
    pub converged: bool,
    pub avg_normalized_reward: f64,
    pub action_source_counts: SourceCounts,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Trailing moving average; the first `w - 1` entries average what is
/// available so far.
pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// First step count `t >= w` whose trailing-`w` mean reaches `threshold` and
/// stays there through the end of the sequence.
pub fn steps_to_converge(rewards: &[f64], w: usize, threshold: f64) -> Option<u64> {
    if w == 0 || rewards.len() < w {
        return None;
    }
    // direct window sums: no running-sum drift, so exact ties stay exact
    let avg_ending_at = |i: usize| rewards[i + 1 - w..=i].iter().sum::<f64>() / w as f64;
    let mut start = None;
    for i in (w - 1..rewards.len()).rev() {
        if avg_ending_at(i) >= threshold {
            start = Some(i);
        } else {
            break;
        }
    }
    start.map(|i| i as u64 + 1)
}

pub fn compute_run_metrics(
    rewards: &[f64],
    oracle_avg: f64,
    weight_sum: f64,
    counts: SourceCounts,
    params: &MetricParams,
) -> RunMetrics {
    let k = params.initial_window.min(rewards.len());
    let steps = steps_to_converge(
        rewards,
        params.convergence_window,
        params.convergence_fraction * oracle_avg,
    );
    RunMetrics {
        initial_reward: mean(&rewards[..k]),
        reward_variance: variance(rewards),
        steps_to_converge: steps,
        converged: steps.is_some(),
        avg_normalized_reward: mean(rewards) / weight_sum,
        action_source_counts: counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn metrics(rewards: &[f64], oracle: f64) -> RunMetrics {
        compute_run_metrics(rewards, oracle, 1.0, SourceCounts::default(), &MetricParams::default())
    }

    fn naive_converge(rewards: &[f64], w: usize, thr: f64) -> Option<u64> {
        let ok = |i: usize| rewards[i + 1 - w..=i].iter().sum::<f64>() / w as f64 >= thr;
        (w - 1..rewards.len())
            .find(|&i| (i..rewards.len()).all(ok))
            .map(|i| i as u64 + 1)
    }

    #[test]
    fn constant_at_oracle_converges_at_first_window() {
        let r = vec![0.8; 10_000];
        let m = metrics(&r, 0.8);
        assert!((m.initial_reward - 0.8).abs() < 1e-12);
        assert!(m.reward_variance < 1e-20);
        assert_eq!(m.steps_to_converge, Some(200));
        assert!(m.converged);
    }

    #[test]
    fn constant_below_threshold_never_converges() {
        let m = metrics(&vec![0.5; 10_000], 0.8);
        assert!(!m.converged);
        assert_eq!(m.steps_to_converge, None);
    }

    #[test]
    fn ramp_matches_direct_scan() {
        let r: Vec<f64> = (0..10_000).map(|i| i as f64 / 9_999.0).collect();
        let m = metrics(&r, 1.0);
        assert_eq!(m.steps_to_converge, naive_converge(&r, 200, 0.9));
        // trailing mean of a ramp lags by ~w/2 steps
        let t = m.steps_to_converge.unwrap();
        assert!((t as i64 - 9_100).abs() <= 2, "{t}");
    }

    #[test]
    fn relapse_resets_convergence() {
        let mut r = vec![1.0; 1000];
        for x in &mut r[600..700] {
            *x = 0.0;
        }
        let t = steps_to_converge(&r, 200, 0.9).unwrap();
        assert_eq!(Some(t), naive_converge(&r, 200, 0.9));
        assert!(t > 700);
    }

    #[test]
    fn moving_average_partial_prefix() {
        let ma = moving_average(&[1.0, 3.0, 5.0, 7.0], 2);
        assert_eq!(ma, vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn normalization_by_weight_sum() {
        let m = compute_run_metrics(&[0.5; 10], 1.0, 2.0, SourceCounts::default(), &MetricParams::default());
        assert!((m.avg_normalized_reward - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn convergence_equals_direct_scan(
            rewards in prop::collection::vec(0.0f64..1.0, 1..300),
            w in 1usize..40,
            thr in 0.0f64..1.0,
        ) {
            let slow = if rewards.len() < w { None } else { naive_converge(&rewards, w, thr) };
            prop_assert_eq!(steps_to_converge(&rewards, w, thr), slow);
        }
    }
}
