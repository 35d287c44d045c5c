//! The shared env + learner loop behind expert training and deployment.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::drl::{mixed_prob, PolicyWeights, Role, Transition, TransitionBuffer};
use crate::env::SlicingEnv;
use crate::error::{Error, Result};
use crate::policy_store::{self, ArchitectureDescriptor, PolicyMetadata, PolicyRecord};
use crate::seeding::{self, stream};
use crate::transfer::{ActionSource, SourceCounts, TransferConfig, TransferController, TransferMode};

use super::config::RunConfig;
use super::metrics::{compute_run_metrics, mean, RunMetrics};
use super::oracle::{env_seed, oracle_best_reward};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub action: usize,
    pub source: ActionSource,
    pub reward: f64,
    /// State observed after the step's window.
    pub kappa: Vec<f64>,
    pub latencies: Vec<f64>,
    /// θ in force when the action was chosen.
    pub theta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    pub learner: PolicyWeights,
    pub counts: SourceCounts,
    pub counts_in_transfer: SourceCounts,
    /// Set when a numeric failure stopped the run early.
    pub aborted: Option<String>,
}

impl RunTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }
}

/// Runs `cfg.total_steps` windows with the given transfer setting and
/// experts. Numeric failures end the run early and are reported in
/// [`RunTrace::aborted`]; configuration errors are returned.
pub fn run_loop(cfg: &RunConfig, transfer: &TransferConfig, experts: &[PolicyWeights], seed: u64) -> Result<RunTrace> {
    if transfer.mode.needs_experts() && experts.is_empty() && transfer.duration > 0 {
        return Err(Error::Config(format!("transfer mode {} needs at least one expert", transfer.mode)));
    }
    let mut env = SlicingEnv::new(cfg.env.clone())?;
    let actions = env.shared_action_space();
    let arch = cfg.architecture();
    let mut learner = PolicyWeights::random(arch, Role::Learner, &mut seeding::rng(seed, stream::LEARNER_INIT));
    let mut action_rng = seeding::rng(seed, stream::ACTION);
    let mut controller = TransferController::new(transfer.clone(), seeding::rng(seed, stream::TRANSFER));
    let mut buffer = TransitionBuffer::new(cfg.ppo.batch_size);
    let mut records = Vec::with_capacity(cfg.total_steps as usize);
    let mut state = env.reset(env_seed(seed)).kappa;
    let mut aborted = None;

    for t in 0..cfg.total_steps {
        let mut step = || -> Result<(StepRecord, Vec<f64>)> {
            let fwd = learner.forward(&state)?;
            let epsilon = cfg.explore.rate(t);
            let theta = controller.theta();
            let decision = controller.select(t, &state, &fwd, experts, &actions, &mut action_rng, epsilon)?;
            let out = env.step(decision.action)?;
            let log_prob = mixed_prob(&fwd.probs, decision.action, epsilon).ln();
            let full = buffer.push(Transition {
                state: state.clone(),
                action: decision.action,
                log_prob,
                reward: out.reward,
                value: fwd.value,
                epsilon,
            });
            if full {
                buffer.bootstrap_value = Some(learner.forward(&out.state.kappa)?.value);
                learner = crate::drl::ppo_update(&learner, &buffer, &cfg.ppo)?.0;
                buffer.clear();
            }
            controller.decay();
            let record = StepRecord {
                step: t,
                action: decision.action,
                source: decision.source,
                reward: out.reward,
                kappa: out.state.kappa.clone(),
                latencies: out.kpis.latencies(),
                theta,
                epsilon,
            };
            Ok((record, out.state.kappa))
        };
        match step() {
            Ok((record, next)) => {
                records.push(record);
                state = next;
            }
            Err(Error::Numeric(msg)) => {
                log::warn!("run aborted at step {t}: {msg}");
                aborted = Some(format!("step {t}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunTrace {
        records,
        learner,
        counts: controller.counts(),
        counts_in_transfer: controller.counts_in_transfer(),
        aborted,
    })
}

pub fn architecture_descriptor(cfg: &RunConfig) -> Result<ArchitectureDescriptor> {
    let space = crate::env::enumerate_action_space(
        cfg.env.num_slices(),
        cfg.env.action_granularity,
        cfg.env.min_share,
    )?;
    let arch = cfg.architecture();
    Ok(ArchitectureDescriptor {
        state_dim: arch.input,
        hidden: arch.hidden,
        actions: arch.actions,
        action_space_hash: space.hash(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: PolicyRecord,
    pub trace: RunTrace,
}

/// Trains a learner from scratch without transfer and packages it as an
/// expert record keyed by [`RunConfig::expert_key`].
pub fn train_expert(cfg: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    let transfer = TransferConfig {
        mode: TransferMode::None,
        ..cfg.transfer.clone()
    };
    let trace = run_loop(cfg, &transfer, &[], seed)?;
    let rewards = trace.rewards();
    let tail = &rewards[rewards.len().saturating_sub(1000)..];
    let desc = architecture_descriptor(cfg)?;
    let metadata = PolicyMetadata {
        training_steps: trace.records.len() as u64,
        final_avg_reward: mean(tail),
        created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        source_pattern: cfg.pattern.clone(),
    };
    let record = PolicyRecord::new(
        cfg.expert_key(seed),
        &trace.learner.clone().with_role(Role::Expert),
        desc.action_space_hash,
        metadata,
    );
    Ok(TrainOutcome { record, trace })
}

/// Loads every configured expert key from `dir`.
pub fn load_experts(cfg: &RunConfig, dir: &Path, keys: &[String]) -> Result<Vec<PolicyWeights>> {
    let desc = architecture_descriptor(cfg)?;
    keys.iter()
        .map(|k| {
            let key = policy_store::resolve_context(dir, k)?;
            policy_store::load_policy(dir, &key, &desc)?.policy_weights()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DeployOutcome {
    pub trace: RunTrace,
    pub metrics: RunMetrics,
    pub oracle_avg: f64,
}

/// Oracle horizon used for a config's convergence threshold.
pub fn oracle_horizon(cfg: &RunConfig) -> u64 {
    match cfg.metrics.oracle_windows {
        0 => cfg.total_steps,
        n => n,
    }
}

/// Deployment run with a freshly initialized learner. When `oracle_avg` is
/// `None` the oracle is computed for the same seed.
pub fn deploy_run(
    cfg: &RunConfig,
    transfer: &TransferConfig,
    experts: &[PolicyWeights],
    seed: u64,
    oracle_avg: Option<f64>,
) -> Result<DeployOutcome> {
    let oracle_avg = match oracle_avg {
        Some(v) => v,
        None => oracle_best_reward(&cfg.env, seed, oracle_horizon(cfg))?.average,
    };
    let trace = run_loop(cfg, transfer, experts, seed)?;
    let metrics = compute_run_metrics(
        &trace.rewards(),
        oracle_avg,
        cfg.env.weight_sum(),
        trace.counts,
        &cfg.metrics,
    );
    Ok(DeployOutcome {
        trace,
        metrics,
        oracle_avg,
    })
}
