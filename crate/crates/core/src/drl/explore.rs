use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ε(t) = eps0 · decay^t` until `end_step`, then 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub eps0: f64,
    pub decay: f64,
    pub end_step: u64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            eps0: 0.2,
            decay: 0.99,
            end_step: 4000,
        }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("invalid exploration schedule {self:?}")));
        }
        Ok(())
    }

    pub fn rate(&self, t: u64) -> f64 {
        exploration_rate(t, self)
    }
}

pub fn exploration_rate(t: u64, schedule: &ExplorationSchedule) -> f64 {
    if t >= schedule.end_step {
        return 0.0;
    }
    schedule.eps0 * schedule.decay.powi(t.min(i32::MAX as u64) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub action: usize,
    /// Log-probability of `action` under the ε-mixed distribution.
    pub log_prob: f64,
    /// The uniform branch was taken.
    pub explored: bool,
}

/// Probability of `action` under `(1 - ε)·probs + ε/|A|`.
pub fn mixed_prob(probs: &[f64], action: usize, epsilon: f64) -> f64 {
    (1.0 - epsilon) * probs[action] + epsilon / probs.len() as f64
}

/// With probability ε picks uniformly, otherwise samples from `probs`.
/// Always consumes exactly two uniforms from `rng`.
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R, epsilon: f64) -> Selection {
    let gate: f64 = rng.random();
    let u: f64 = rng.random();
    let n = probs.len();
    let (action, explored) = if gate < epsilon {
        (((u * n as f64) as usize).min(n - 1), true)
    } else {
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = a;
                break;
            }
        }
        // guard against rounding in the cumulative sum landing on a zero-mass tail
        while probs[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        (pick, false)
    };
    Selection {
        action,
        log_prob: mixed_prob(probs, action, epsilon).ln(),
        explored,
    }
}
