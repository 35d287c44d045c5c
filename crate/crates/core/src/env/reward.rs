//! State and reward.

use super::SliceSpec;

/// Per-slice share of the window's total demand.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub kappa: Vec<f64>,
}

impl StateVector {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }
}

/// `κ_s = D_s / Σ D_i`, or all zeros when nothing was demanded.
pub fn compute_state(demands: &[u64]) -> StateVector {
    let total: u64 = demands.iter().sum();
    let kappa = if total == 0 {
        vec![0.0; demands.len()]
    } else {
        demands.iter().map(|&d| d as f64 / total as f64).collect()
    };
    StateVector { kappa }
}

/// Sigmoid SLA score of one slice: `1 / (1 + exp(c1 (l - c2)))`.
pub fn slice_score(latency_ms: f64, c1: f64, c2: f64) -> f64 {
    1.0 / (1.0 + (c1 * (latency_ms - c2)).exp())
}

/// `R = Σ_s w_s / (1 + exp(c1_s (l_s - c2_s)))`.
pub fn compute_reward(latencies: &[f64], slices: &[SliceSpec]) -> f64 {
    latencies
        .iter()
        .zip(slices)
        .map(|(&l, s)| s.weight * slice_score(l, s.c1, s.c2))
        .sum()
}
