//! Experiment orchestration: configs, the training/deployment loop, the
//! exhaustive-search oracle, metrics, sweeps and reports.

pub mod config;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{load_config, parse_config, ConfigFile, RunConfig};
pub use metrics::{compute_run_metrics, MetricParams, RunMetrics};
pub use oracle::{oracle_best_reward, oracle_replay, OracleReplay, OracleResult};
pub use run::{deploy_run, load_experts, run_loop, train_expert, DeployOutcome, RunTrace, StepRecord, TrainOutcome};
