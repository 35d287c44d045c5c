//! Grid sweeps: expert training, per-seed oracles and deployment runs over
//! (mode × exploration decay × θ × γ × replicate), run on a bounded pool.
//!
//! Output layout under the sweep directory:
//!
//! ```text
//! policies/<context_key>.policy
//! <scenario>/metrics.csv
//! <scenario>/run_index.csv
//! <scenario>/runs/<run_id>.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drl::PolicyWeights;
use crate::error::{Error, Result};
use crate::policy_store;
use crate::seeding;
use crate::transfer::{ActionSource, TransferConfig, TransferMode};

use super::config::{load_config, RunConfig};
use super::io::{write_rows, write_step_csv, MetricsRow, RunIndexRow};
use super::oracle::oracle_best_reward;
use super::run::{deploy_run, oracle_horizon, train_expert};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Deployment environment; defaults to the sweep config itself.
    #[serde(default)]
    pub deploy_config: Option<PathBuf>,
    /// Config the experts are trained on; defaults to the deployment config.
    #[serde(default)]
    pub expert_config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Seeds per grid point; replicate `i` runs with seed `mix(seed, i)`.
    pub replicates: u32,
    pub explore_decays: Vec<f64>,
    pub thetas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub modes: Vec<TransferMode>,
    /// θ decay; `None` keeps the deployment config's value.
    pub nu: Option<f64>,
    pub top_k: usize,
    /// Training seeds of the expert set consulted by every transfer run.
    pub expert_seeds: Vec<u64>,
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            replicates: 2,
            explore_decays: vec![0.99, 0.7, 0.5, 0.3],
            thetas: vec![0.9, 0.7, 0.5, 0.3],
            gammas: vec![0.99, 0.9, 0.7, 0.5, 0.3],
            modes: TransferMode::ALL.to_vec(),
            nu: None,
            top_k: 16,
            expert_seeds: vec![1],
            scenarios: Vec::new(),
        }
    }
}

/// One deployment run of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub scenario: usize,
    pub mode: TransferMode,
    pub explore_decay: f64,
    /// `None` for mode `none`.
    pub theta: Option<f64>,
    /// Only set for hybrid runs.
    pub gamma: Option<f64>,
    pub replicate: u32,
}

impl PlannedRun {
    pub fn run_id(&self) -> String {
        let mut id = format!("{}-d{}", self.mode, self.explore_decay);
        if let Some(t) = self.theta {
            id.push_str(&format!("-t{t}"));
        }
        if let Some(g) = self.gamma {
            id.push_str(&format!("-g{g}"));
        }
        id.push_str(&format!("-r{}", self.replicate));
        id
    }
}

/// Grid points per scenario, filtered per mode: `none` ignores θ and γ,
/// reuse and distill ignore γ.
pub fn plan_runs(spec: &SweepSpec, num_scenarios: usize) -> Vec<PlannedRun> {
    let mut out = Vec::new();
    for scenario in 0..num_scenarios {
        for &mode in &spec.modes {
            let thetas: Vec<Option<f64>> = match mode {
                TransferMode::None => vec![None],
                _ => spec.thetas.iter().copied().map(Some).collect(),
            };
            let gammas: Vec<Option<f64>> = match mode {
                TransferMode::Hybrid => spec.gammas.iter().copied().map(Some).collect(),
                _ => vec![None],
            };
            for &explore_decay in &spec.explore_decays {
                for &theta in &thetas {
                    for &gamma in &gammas {
                        for replicate in 0..spec.replicates {
                            out.push(PlannedRun {
                                scenario,
                                mode,
                                explore_decay,
                                theta,
                                gamma,
                                replicate,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn replicate_seed(base_seed: u64, replicate: u32) -> u64 {
    seeding::mix(base_seed, replicate as u64)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub deploy: RunConfig,
    pub expert: RunConfig,
}

fn resolve_scenarios(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<Scenario>> {
    if spec.scenarios.is_empty() {
        return Ok(vec![Scenario {
            name: "default".into(),
            deploy: cfg.clone(),
            expert: cfg.clone(),
        }]);
    }
    let load = |p: &Option<PathBuf>, fallback: &RunConfig| match p {
        Some(p) => load_config(cfg.base_dir.join(p)),
        None => Ok(fallback.clone()),
    };
    let mut seen = std::collections::BTreeSet::new();
    spec.scenarios
        .iter()
        .map(|s| {
            if !seen.insert(s.name.clone()) || s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid or duplicate scenario name {:?}", s.name)));
            }
            let deploy = load(&s.deploy_config, cfg)?;
            let expert = load(&s.expert_config, &deploy)?;
            Ok(Scenario {
                name: s.name.clone(),
                deploy,
                expert,
            })
        })
        .collect()
}

pub fn validate_spec(spec: &SweepSpec) -> Result<()> {
    let in_unit = |xs: &[f64]| xs.iter().all(|x| (0.0..=1.0).contains(x));
    if spec.replicates == 0
        || spec.modes.is_empty()
        || spec.explore_decays.is_empty()
        || !spec.explore_decays.iter().all(|d| *d > 0.0 && *d <= 1.0)
        || !in_unit(&spec.thetas)
        || !in_unit(&spec.gammas)
        || spec.top_k == 0
    {
        return Err(Error::Config(format!("invalid sweep specification {spec:?}")));
    }
    if spec.modes.iter().any(|m| m.needs_experts()) && (spec.thetas.is_empty() || spec.expert_seeds.is_empty()) {
        return Err(Error::Config("transfer modes need thetas and expert_seeds".into()));
    }
    if spec.modes.contains(&TransferMode::Hybrid) && spec.gammas.is_empty() {
        return Err(Error::Config("hybrid mode needs gammas".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub scenarios: Vec<String>,
    pub metrics: Vec<MetricsRow>,
    pub index: Vec<RunIndexRow>,
}

/// Runs the whole sweep described by `cfg.sweep` with `jobs` worker threads
/// and writes it under `out`. Output is independent of `jobs`.
pub fn run_sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<SweepOutcome> {
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    validate_spec(&spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep_in_pool(cfg, &spec, out))
}

fn run_sweep_in_pool(cfg: &RunConfig, spec: &SweepSpec, out: &Path) -> Result<SweepOutcome> {
    let scenarios = resolve_scenarios(cfg, spec)?;
    let policy_dir = out.join("policies");

    // experts: one set per distinct expert config
    let mut expert_jobs: Vec<(usize, u64)> = Vec::new();
    let mut expert_of_scenario = Vec::with_capacity(scenarios.len());
    let mut owners: Vec<usize> = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        let owner = owners
            .iter()
            .copied()
            .find(|&o| same_expert_source(&scenarios[o], sc))
            .unwrap_or_else(|| {
                owners.push(i);
                i
            });
        expert_of_scenario.push(owner);
    }
    let needs_experts = spec.modes.iter().any(|m| m.needs_experts());
    if needs_experts {
        for &o in &owners {
            for &s in &spec.expert_seeds {
                expert_jobs.push((o, s));
            }
        }
    }
    log::info!("training {} expert(s)", expert_jobs.len());
    let trained = expert_jobs
        .par_iter()
        .map(|&(o, s)| {
            let t = train_expert(&scenarios[o].expert, s)?;
            if let Some(msg) = &t.trace.aborted {
                return Err(Error::Numeric(format!("expert {} aborted: {msg}", t.record.context_key)));
            }
            Ok(((o, s), t.record))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut experts: BTreeMap<usize, Vec<PolicyWeights>> = BTreeMap::new();
    for ((o, _), record) in &trained {
        policy_store::save_policy(&policy_dir, record, true)?;
        experts.entry(*o).or_default().push(record.policy_weights()?);
    }

    // oracle averages per (scenario, replicate)
    let oracle_jobs: Vec<(usize, u32)> = (0..scenarios.len())
        .flat_map(|s| (0..spec.replicates).map(move |r| (s, r)))
        .collect();
    log::info!("computing {} oracle trajector(ies)", oracle_jobs.len());
    let oracles: BTreeMap<(usize, u32), f64> = oracle_jobs
        .par_iter()
        .map(|&(s, r)| {
            let d = &scenarios[s].deploy;
            oracle_best_reward(&d.env, replicate_seed(d.seed, r), oracle_horizon(d)).map(|o| ((s, r), o.average))
        })
        .collect::<Result<_>>()?;

    let plan = plan_runs(spec, scenarios.len());
    log::info!("running {} deployment(s)", plan.len());
    let no_experts: Vec<PolicyWeights> = Vec::new();
    let results = plan
        .par_iter()
        .map(|p| {
            let sc = &scenarios[p.scenario];
            let mut run_cfg = sc.deploy.clone();
            run_cfg.explore.decay = p.explore_decay;
            let transfer = TransferConfig {
                mode: p.mode,
                theta: p.theta.unwrap_or(0.0),
                nu: spec.nu.unwrap_or(sc.deploy.transfer.nu),
                duration: sc.deploy.transfer.duration,
                gamma: p.gamma.unwrap_or(sc.deploy.transfer.gamma),
            };
            let seed = replicate_seed(sc.deploy.seed, p.replicate);
            let ex = experts.get(&expert_of_scenario[p.scenario]).unwrap_or(&no_experts);
            let outcome = deploy_run(&run_cfg, &transfer, ex, seed, Some(oracles[&(p.scenario, p.replicate)]))?;
            let run_id = p.run_id();
            let rel = format!("runs/{run_id}.csv");
            write_step_csv(&out.join(&sc.name).join(&rel), &outcome.trace, run_cfg.env.num_slices())?;
            let m = &outcome.metrics;
            let metrics = MetricsRow {
                run_id: run_id.clone(),
                mode: p.mode.as_str().into(),
                seed,
                theta0: p.theta,
                nu: p.theta.map(|_| transfer.nu),
                gamma: p.gamma,
                initial_reward: m.initial_reward,
                variance: m.reward_variance,
                steps_to_converge: m.steps_to_converge,
                converged: m.converged,
                avg_normalized_reward: m.avg_normalized_reward,
            };
            let c = outcome.trace.counts;
            let ct = outcome.trace.counts_in_transfer;
            let index = RunIndexRow {
                run_id,
                scenario: sc.name.clone(),
                replicate: p.replicate,
                explore_decay: p.explore_decay,
                oracle_avg: outcome.oracle_avg,
                steps: outcome.trace.records.len() as u64,
                aborted: outcome.trace.aborted.is_some(),
                step_csv: rel,
                learner: c.get(ActionSource::Learner),
                expert_reuse: c.get(ActionSource::ExpertReuse),
                distilled: c.get(ActionSource::Distilled),
                random_exploration: c.get(ActionSource::RandomExploration),
                learner_in_transfer: ct.get(ActionSource::Learner),
                expert_reuse_in_transfer: ct.get(ActionSource::ExpertReuse),
                distilled_in_transfer: ct.get(ActionSource::Distilled),
                random_exploration_in_transfer: ct.get(ActionSource::RandomExploration),
            };
            Ok((p.scenario, metrics, index))
        })
        .collect::<Result<Vec<_>>>()?;

    for (s, sc) in scenarios.iter().enumerate() {
        let rows: Vec<_> = results.iter().filter(|r| r.0 == s).collect();
        write_rows(
            &out.join(&sc.name).join("metrics.csv"),
            &rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>(),
        )?;
        write_rows(
            &out.join(&sc.name).join("run_index.csv"),
            &rows.iter().map(|r| r.2.clone()).collect::<Vec<_>>(),
        )?;
    }
    Ok(SweepOutcome {
        scenarios: scenarios.into_iter().map(|s| s.name).collect(),
        metrics: results.iter().map(|r| r.1.clone()).collect(),
        index: results.into_iter().map(|r| r.2).collect(),
    })
}

fn same_expert_source(a: &Scenario, b: &Scenario) -> bool {
    a.expert.env == b.expert.env
        && a.expert.pattern == b.expert.pattern
        && a.expert.total_steps == b.expert.total_steps
        && a.expert.ppo == b.expert.ppo
        && a.expert.explore == b.expert.explore
        && a.expert.hidden == b.expert.hidden
}
