use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tl_slicing::harness::{self, io, report, sweep};
use tl_slicing::policy_store;
use tl_slicing::transfer::{TransferConfig, TransferMode};

#[derive(Parser)]
#[command(name = "tl-slicing", version, about = "Transfer-learning-aided RAN slicing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an expert from scratch and store it in the policy directory.
    TrainExpert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; the policy goes to <out>/policies.
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing policy with the same key.
        #[arg(long)]
        overwrite: bool,
    },
    /// Run one deployment with optional transfer from stored experts.
    Deploy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<TransferMode>,
        /// Expert context key; repeat for several experts.
        #[arg(long)]
        expert: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Policy directory (default <out>/policies).
        #[arg(long)]
        policies: Option<PathBuf>,
    },
    /// Exhaustive-search reward upper bound.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        windows: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the [sweep] grid of a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a sweep directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::TrainExpert {
            config,
            seed,
            out,
            overwrite,
        } => {
            let cfg = harness::load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let outcome = harness::train_expert(&cfg, seed)?;
            let csv = out.join(format!("train-seed{seed}.csv"));
            io::write_step_csv(&csv, &outcome.trace, cfg.env.num_slices())?;
            if let Some(msg) = &outcome.trace.aborted {
                bail!("training aborted ({msg}); partial trace in {}", csv.display());
            }
            let path = policy_store::save_policy(&out.join("policies"), &outcome.record, overwrite)?;
            println!(
                "{}\t{}\tfinal_avg_reward={:.6}",
                outcome.record.context_key,
                path.display(),
                outcome.record.metadata.final_avg_reward
            );
        }
        Command::Deploy {
            config,
            mode,
            expert,
            seed,
            out,
            policies,
        } => {
            let cfg = harness::load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let transfer = TransferConfig {
                mode: mode.unwrap_or(cfg.transfer.mode),
                ..cfg.transfer.clone()
            };
            let keys = if expert.is_empty() { cfg.expert_keys.clone() } else { expert };
            let experts = if transfer.mode.needs_experts() {
                if keys.is_empty() {
                    bail!("mode {} needs --expert KEY (or expert_keys in the config)", transfer.mode);
                }
                let dir = policies.unwrap_or_else(|| out.join("policies"));
                harness::load_experts(&cfg, &dir, &keys).with_context(|| format!("loading experts from {}", dir.display()))?
            } else {
                Vec::new()
            };
            let outcome = harness::deploy_run(&cfg, &transfer, &experts, seed, None)?;
            let run_id = format!("{}-seed{seed}", transfer.mode);
            let csv = out.join(format!("{run_id}.csv"));
            io::write_step_csv(&csv, &outcome.trace, cfg.env.num_slices())?;
            let m = &outcome.metrics;
            io::write_rows(
                &out.join(format!("{run_id}.metrics.csv")),
                &[io::MetricsRow {
                    run_id: run_id.clone(),
                    mode: transfer.mode.as_str().into(),
                    seed,
                    theta0: transfer.mode.needs_experts().then_some(transfer.theta),
                    nu: transfer.mode.needs_experts().then_some(transfer.nu),
                    gamma: (transfer.mode == TransferMode::Hybrid).then_some(transfer.gamma),
                    initial_reward: m.initial_reward,
                    variance: m.reward_variance,
                    steps_to_converge: m.steps_to_converge,
                    converged: m.converged,
                    avg_normalized_reward: m.avg_normalized_reward,
                }],
            )?;
            println!(
                "{run_id}: initial={:.4} variance={:.6} steps_to_converge={} avg_normalized={:.4} oracle_avg={:.4}",
                m.initial_reward,
                m.reward_variance,
                m.steps_to_converge.map_or("-".into(), |s| s.to_string()),
                m.avg_normalized_reward,
                outcome.oracle_avg
            );
            if let Some(msg) = &outcome.trace.aborted {
                eprintln!("run aborted ({msg}); {} is partial", csv.display());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Oracle { config, windows, seed } => {
            let cfg = harness::load_config(&config)?;
            let o = harness::oracle_best_reward(&cfg.env, seed.unwrap_or(cfg.seed), windows)?;
            println!("window,action_id,reward");
            for (w, (a, r)) in o.actions.iter().zip(&o.rewards).enumerate() {
                println!("{w},{a},{r}");
            }
            eprintln!("oracle average reward over {windows} windows: {:.6}", o.average);
        }
        Command::Sweep { config, jobs, out } => {
            let cfg = harness::load_config(&config)?;
            let outcome = sweep::run_sweep(&cfg, &out, jobs)?;
            let aborted = outcome.index.iter().filter(|r| r.aborted).count();
            println!(
                "{} runs over scenario(s) {:?} written to {}{}",
                outcome.metrics.len(),
                outcome.scenarios,
                out.display(),
                if aborted > 0 { format!(" ({aborted} aborted)") } else { String::new() }
            );
        }
        Command::Report { input, top_k, out } => {
            let runs = report::load_sweep(&input)?;
            let rep = report::aggregate_report(&runs, top_k)?;
            let curves = report::write_report(&rep, &out)?;
            print!("{}", report::render_report(&rep));
            eprintln!("wrote {} and {}", out.display(), curves.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
