//! Policy transfer during the first `T` steps of a deployment: reuse of an
//! expert's action (generalized policy improvement over the expert set),
//! distillation to the grid point nearest the expert/learner midpoint, and
//! the hybrid that gates between the two with probability γ.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drl::{argmax, select_action, Forward, PolicyWeights};
use crate::env::ActionSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    None,
    Reuse,
    Distill,
    Hybrid,
}

impl TransferMode {
    pub const ALL: [TransferMode; 4] = [
        TransferMode::None,
        TransferMode::Reuse,
        TransferMode::Distill,
        TransferMode::Hybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMode::None => "none",
            TransferMode::Reuse => "reuse",
            TransferMode::Distill => "distill",
            TransferMode::Hybrid => "hybrid",
        }
    }

    pub fn needs_experts(&self) -> bool {
        !matches!(self, TransferMode::None)
    }
}

impl std::fmt::Display for TransferMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TransferMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TransferMode::None),
            "reuse" => Ok(TransferMode::Reuse),
            "distill" => Ok(TransferMode::Distill),
            "hybrid" => Ok(TransferMode::Hybrid),
            other => Err(Error::Config(format!("unknown transfer mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Initial transfer rate θ.
    pub theta: f64,
    /// Per-step multiplicative decay ν of θ.
    pub nu: f64,
    /// Transfer duration T in steps.
    pub duration: u64,
    /// Hybrid gate γ: probability of reuse over distillation.
    pub gamma: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            mode: TransferMode::None,
            theta: 0.9,
            nu: 0.999,
            duration: 3000,
            gamma: 0.99,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta)
            || !(self.nu > 0.0 && self.nu <= 1.0)
            || !(0.0..=1.0).contains(&self.gamma)
        {
            return Err(Error::Config(format!("invalid transfer configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Learner,
    ExpertReuse,
    Distilled,
    RandomExploration,
}

impl ActionSource {
    pub const ALL: [ActionSource; 4] = [
        ActionSource::Learner,
        ActionSource::ExpertReuse,
        ActionSource::Distilled,
        ActionSource::RandomExploration,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionSource::Learner => "learner",
            ActionSource::ExpertReuse => "expert_reuse",
            ActionSource::Distilled => "distilled",
            ActionSource::RandomExploration => "random_exploration",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            ActionSource::Learner => 0,
            ActionSource::ExpertReuse => 1,
            ActionSource::Distilled => 2,
            ActionSource::RandomExploration => 3,
        }
    }
}

impl std::str::FromStr for ActionSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ActionSource::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown action source {s:?}")))
    }
}

/// Counts of executed actions by source, indexed by [`ActionSource::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts(pub [u64; 4]);

impl SourceCounts {
    pub fn record(&mut self, s: ActionSource) {
        self.0[s.index()] += 1;
    }

    pub fn get(&self, s: ActionSource) -> u64 {
        self.0[s.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Greedy action over a set of per-expert action-preference tables:
/// `argmax_a max_i prefs[i][a]`, ties to the lowest action id.
pub fn gpi_from_preferences(prefs: &[Vec<f64>]) -> Result<usize> {
    let first = prefs
        .first()
        .ok_or_else(|| Error::Config("generalized policy improvement needs at least one expert".into()))?;
    let best: Vec<f64> = (0..first.len())
        .map(|a| prefs.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(argmax(&best))
}

/// Reuse action: expert logits serve as action preferences.
pub fn gpi_action(state: &[f64], experts: &[PolicyWeights], action_space: &ActionSpace) -> Result<usize> {
    let prefs = experts
        .iter()
        .map(|e| e.forward(state).map(|f| f.logits))
        .collect::<Result<Vec<_>>>()?;
    let a = gpi_from_preferences(&prefs)?;
    debug_assert!(a < action_space.len());
    Ok(a)
}

/// Grid action nearest (Euclidean) to the midpoint of the expert and learner
/// allocations; ties to the lowest id.
///
/// All grid points share the same minimum share, so distances are compared
/// exactly in integer grid units: `|2u_a - (u_E + u_L)|²`.
pub fn distill_action(expert: usize, learner: usize, action_space: &ActionSpace) -> usize {
    let ue = &action_space.allocations()[expert].units;
    let ul = &action_space.allocations()[learner].units;
    let mut best = 0;
    let mut best_d = i64::MAX;
    for (id, a) in action_space.iter().enumerate() {
        let d: i64 = a
            .units
            .iter()
            .zip(ue.iter().zip(ul))
            .map(|(&x, (&e, &l))| {
                let diff = 2 * x as i64 - (e as i64 + l as i64);
                diff * diff
            })
            .sum();
        if d < best_d {
            best = id;
            best_d = d;
        }
    }
    best
}

pub fn decay_theta(theta: f64, nu: f64) -> f64 {
    theta * nu
}

/// Outcome of one transfer-aware action selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub source: ActionSource,
}

/// Per-run transfer state: the decaying θ and the RNG used only for the
/// `(x, r)` gate draws, kept separate from the learner's sampling RNG so
/// gate draws never shift the learner's randomness.
#[derive(Debug, Clone)]
pub struct TransferController {
    cfg: TransferConfig,
    theta: f64,
    rng: ChaCha8Rng,
    counts: SourceCounts,
    counts_in_transfer: SourceCounts,
}

impl TransferController {
    pub fn new(cfg: TransferConfig, rng: ChaCha8Rng) -> Self {
        Self {
            theta: cfg.theta,
            cfg,
            rng,
            counts: SourceCounts::default(),
            counts_in_transfer: SourceCounts::default(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn config(&self) -> &TransferConfig {
        &self.cfg
    }

    pub fn counts(&self) -> SourceCounts {
        self.counts
    }

    /// Counts restricted to steps `t < T`.
    pub fn counts_in_transfer(&self) -> SourceCounts {
        self.counts_in_transfer
    }

    /// Chooses the action for step `t`.
    ///
    /// For `t >= T` or mode `none` this is plain ε-mixed learner sampling and
    /// no gate randomness is consumed. Otherwise `x` and `r` are both drawn
    /// every step; `x <= θ` (never when θ = 0) follows transferred knowledge,
    /// and in hybrid mode `r < γ` picks reuse over distillation.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        t: u64,
        state: &[f64],
        learner: &Forward,
        experts: &[PolicyWeights],
        action_space: &ActionSpace,
        action_rng: &mut R,
        epsilon: f64,
    ) -> Result<Decision> {
        let in_transfer = t < self.cfg.duration && self.cfg.mode != TransferMode::None;
        let decision = if !in_transfer {
            learner_decision(learner, action_rng, epsilon)
        } else {
            if experts.is_empty() {
                return Err(Error::Config(format!(
                    "transfer mode {} requires at least one expert",
                    self.cfg.mode
                )));
            }
            let x: f64 = self.rng.random();
            let r: f64 = self.rng.random();
            let follow = self.theta > 0.0 && x <= self.theta;
            if !follow {
                learner_decision(learner, action_rng, epsilon)
            } else {
                let reuse = match self.cfg.mode {
                    TransferMode::Reuse => true,
                    TransferMode::Distill => false,
                    TransferMode::Hybrid => r < self.cfg.gamma,
                    TransferMode::None => unreachable!(),
                };
                let expert_action = gpi_action(state, experts, action_space)?;
                if reuse {
                    Decision {
                        action: expert_action,
                        source: ActionSource::ExpertReuse,
                    }
                } else {
                    Decision {
                        action: distill_action(expert_action, learner.argmax(), action_space),
                        source: ActionSource::Distilled,
                    }
                }
            }
        };
        self.counts.record(decision.source);
        if t < self.cfg.duration {
            self.counts_in_transfer.record(decision.source);
        }
        Ok(decision)
    }

    /// θ ← θ·ν, once per environment step.
    pub fn decay(&mut self) {
        self.theta = decay_theta(self.theta, self.cfg.nu);
    }
}

fn learner_decision<R: Rng + ?Sized>(learner: &Forward, rng: &mut R, epsilon: f64) -> Decision {
    let sel = select_action(&learner.probs, rng, epsilon);
    Decision {
        action: sel.action,
        source: if sel.explored {
            ActionSource::RandomExploration
        } else {
            ActionSource::Learner
        },
    }
}
