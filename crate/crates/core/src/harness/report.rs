//! Aggregation of a sweep directory: top-k runs per mode, mean metrics,
//! smoothed reward curves, the per-γ breakdown of hybrid runs and the
//! comparison against the published hybrid-vs-reuse gains.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::transfer::TransferMode;

use super::io::{read_rows, read_step_rewards, write_rows, MetricsRow, RunIndexRow};
use super::metrics::{mean, moving_average};

/// Published minimum gains of hybrid over reuse: initial reward (%),
/// converged runs (%), variance decrease (%).
pub const PAPER_INITIAL_GAIN_PCT: f64 = 7.7;
pub const PAPER_CONVERGED_GAIN_PCT: f64 = 20.7;
pub const PAPER_VARIANCE_DECREASE_PCT: f64 = 64.6;

/// Trailing window of the smoothed reward curves.
pub const CURVE_WINDOW: usize = 200;

/// One run as read back from a sweep directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub metrics: MetricsRow,
    pub index: RunIndexRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRuns {
    pub name: String,
    pub dir: PathBuf,
    pub runs: Vec<RunRow>,
}

/// Orders by descending normalized reward, then ascending run id.
fn rank_order(a: &MetricsRow, b: &MetricsRow) -> Ordering {
    b.avg_normalized_reward
        .total_cmp(&a.avg_normalized_reward)
        .then_with(|| a.run_id.cmp(&b.run_id))
}

/// Indices of the `k` best rows by normalized reward, best first.
pub fn select_top_k(rows: &[MetricsRow], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let cmp = |a: &usize, b: &usize| rank_order(&rows[*a], &rows[*b]);
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// Mean counts of executed actions by source during the transfer window:
/// learner, expert reuse, distilled, random exploration.
pub type SourceMeans = [f64; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: TransferMode,
    pub runs_available: usize,
    pub runs_selected: usize,
    pub initial_reward: f64,
    /// Mean of per-run population variances.
    pub variance: f64,
    pub converged_pct: f64,
    /// Mean over converged runs only.
    pub steps_to_converge: Option<f64>,
    pub avg_normalized_reward: f64,
    pub counts_in_transfer: SourceMeans,
    /// Mean over selected runs of the trailing-window reward average.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSummary {
    pub gamma: f64,
    pub runs_selected: usize,
    pub converged_pct: f64,
    /// Mean steps to converge with non-converged runs counted at the run length.
    pub censored_steps: f64,
    pub counts_in_transfer: SourceMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub name: String,
    pub modes: Vec<ModeSummary>,
    pub gammas: Vec<GammaSummary>,
    /// Spearman ρ between `-γ` and (censored) steps to converge over the
    /// per-γ top-k hybrid runs.
    pub gamma_steps_rho: Option<f64>,
}

impl ScenarioReport {
    pub fn mode(&self, m: TransferMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|s| s.mode == m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub top_k: usize,
    pub scenarios: Vec<ScenarioReport>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Finds every `<dir>/<scenario>/metrics.csv` and joins it with its
/// `run_index.csv`.
pub fn load_sweep(dir: &Path) -> Result<Vec<ScenarioRuns>> {
    let mut out = Vec::new();
    let mut metric_files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .min_depth(1)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == "metrics.csv")
        .map(|e| e.into_path())
        .collect();
    metric_files.sort();
    for mpath in metric_files {
        let sdir = mpath.parent().expect("file has a parent").to_path_buf();
        let metrics: Vec<MetricsRow> = read_rows(&mpath)?;
        let index: Vec<RunIndexRow> = read_rows(&sdir.join("run_index.csv"))?;
        if metrics.len() != index.len() {
            return Err(Error::Config(format!(
                "{}: {} metric rows but {} index rows",
                sdir.display(),
                metrics.len(),
                index.len()
            )));
        }
        let runs = metrics
            .into_iter()
            .zip(index)
            .map(|(m, i)| {
                if m.run_id != i.run_id {
                    return Err(Error::Config(format!("run id mismatch {} / {}", m.run_id, i.run_id)));
                }
                Ok(RunRow { metrics: m, index: i })
            })
            .collect::<Result<Vec<_>>>()?;
        let name = runs
            .first()
            .map(|r| r.index.scenario.clone())
            .unwrap_or_else(|| sdir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        out.push(ScenarioRuns { name, dir: sdir, runs });
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no metrics.csv found under {}", dir.display())));
    }
    Ok(out)
}

fn source_means(runs: &[&RunRow]) -> SourceMeans {
    let f = |g: fn(&RunIndexRow) -> u64| mean(&runs.iter().map(|r| g(&r.index) as f64).collect::<Vec<_>>());
    [
        f(|i| i.learner_in_transfer),
        f(|i| i.expert_reuse_in_transfer),
        f(|i| i.distilled_in_transfer),
        f(|i| i.random_exploration_in_transfer),
    ]
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn top_k_of<'a>(runs: &[&'a RunRow], k: usize) -> Vec<&'a RunRow> {
    let rows: Vec<MetricsRow> = runs.iter().map(|r| r.metrics.clone()).collect();
    select_top_k(&rows, k).into_iter().map(|i| runs[i]).collect()
}

fn summarize_scenario(sc: &ScenarioRuns, top_k: usize, warnings: &mut Vec<String>) -> Result<ScenarioReport> {
    let mut modes = Vec::new();
    for mode in TransferMode::ALL {
        let all: Vec<&RunRow> = sc.runs.iter().filter(|r| r.metrics.mode == mode.as_str()).collect();
        if all.is_empty() {
            continue;
        }
        if top_k > all.len() {
            warnings.push(format!(
                "{}: top-k {top_k} exceeds the {} {} run(s); using all",
                sc.name,
                all.len(),
                mode
            ));
        }
        let sel = top_k_of(&all, top_k);
        let m = |g: fn(&MetricsRow) -> f64| mean(&sel.iter().map(|r| g(&r.metrics)).collect::<Vec<_>>());
        let converged: Vec<f64> = sel
            .iter()
            .filter_map(|r| r.metrics.steps_to_converge.map(|s| s as f64))
            .collect();
        let mut curve: Vec<f64> = Vec::new();
        for r in &sel {
            let rewards = read_step_rewards(&sc.dir.join(&r.index.step_csv))?;
            let ma = moving_average(&rewards, CURVE_WINDOW);
            if curve.is_empty() {
                curve = vec![0.0; ma.len()];
            }
            let n = curve.len().min(ma.len());
            curve.truncate(n);
            for (c, v) in curve.iter_mut().zip(&ma) {
                *c += v / sel.len() as f64;
            }
        }
        modes.push(ModeSummary {
            mode,
            runs_available: all.len(),
            runs_selected: sel.len(),
            initial_reward: m(|r| r.initial_reward),
            variance: m(|r| r.variance),
            converged_pct: pct(converged.len(), sel.len()),
            steps_to_converge: (!converged.is_empty()).then(|| mean(&converged)),
            avg_normalized_reward: m(|r| r.avg_normalized_reward),
            counts_in_transfer: source_means(&sel),
            curve,
        });
    }

    let hybrid: Vec<&RunRow> = sc.runs.iter().filter(|r| r.metrics.mode == "hybrid").collect();
    let mut gamma_values: Vec<f64> = hybrid.iter().filter_map(|r| r.metrics.gamma).collect();
    gamma_values.sort_by(|a, b| b.total_cmp(a));
    gamma_values.dedup();
    let mut gammas = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for g in gamma_values {
        let group: Vec<&RunRow> = hybrid.iter().copied().filter(|r| r.metrics.gamma == Some(g)).collect();
        let sel = top_k_of(&group, top_k);
        let censored: Vec<f64> = sel
            .iter()
            .map(|r| r.metrics.steps_to_converge.unwrap_or(r.index.steps) as f64)
            .collect();
        for c in &censored {
            xs.push(-g);
            ys.push(*c);
        }
        gammas.push(GammaSummary {
            gamma: g,
            runs_selected: sel.len(),
            converged_pct: pct(sel.iter().filter(|r| r.metrics.converged).count(), sel.len()),
            censored_steps: mean(&censored),
            counts_in_transfer: source_means(&sel),
        });
    }
    Ok(ScenarioReport {
        name: sc.name.clone(),
        modes,
        gammas,
        gamma_steps_rho: spearman(&xs, &ys),
    })
}

pub fn aggregate_report(scenarios: &[ScenarioRuns], top_k: usize) -> Result<Report> {
    if top_k == 0 {
        return Err(Error::Config("top-k must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let scenarios = scenarios
        .iter()
        .map(|s| summarize_scenario(s, top_k, &mut warnings))
        .collect::<Result<Vec<_>>>()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Report {
        top_k,
        scenarios,
        warnings,
    })
}

/// Relative change of `a` over `b` in percent.
pub fn rel_change_pct(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (a - b) / b.abs())
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "n/a".into())
}

pub fn render_report(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Sweep report (top-{} runs per mode)", r.top_k);
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for sc in &r.scenarios {
        let _ = writeln!(s, "\n## Scenario {}\n", sc.name);
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>5} {:>10} {:>12} {:>10} {:>10} {:>10}",
            "mode", "runs", "top", "initial", "variance", "conv_%", "steps", "avg_norm"
        );
        for m in &sc.modes {
            let _ = writeln!(
                s,
                "{:<8} {:>5} {:>5} {:>10.4} {:>12.6} {:>10.1} {:>10} {:>10.4}",
                m.mode.as_str(),
                m.runs_available,
                m.runs_selected,
                m.initial_reward,
                m.variance,
                m.converged_pct,
                fmt_opt(m.steps_to_converge, 0),
                m.avg_normalized_reward
            );
        }
        let _ = writeln!(s, "\nactions during transfer (mean per run: learner / reuse / distilled / random):");
        for m in &sc.modes {
            let c = m.counts_in_transfer;
            let _ = writeln!(
                s,
                "  {:<8} {:.1} / {:.1} / {:.1} / {:.1}",
                m.mode.as_str(),
                c[0],
                c[1],
                c[2],
                c[3]
            );
        }
        if !sc.gammas.is_empty() {
            let _ = writeln!(s, "\nhybrid by gamma (top-{} per gamma):", r.top_k);
            let _ = writeln!(
                s,
                "{:>6} {:>5} {:>8} {:>10} {:>9} {:>9} {:>9} {:>9}",
                "gamma", "top", "conv_%", "steps*", "learner", "reuse", "distill", "random"
            );
            for g in &sc.gammas {
                let c = g.counts_in_transfer;
                let _ = writeln!(
                    s,
                    "{:>6} {:>5} {:>8.1} {:>10.0} {:>9.1} {:>9.1} {:>9.1} {:>9.1}",
                    g.gamma, g.runs_selected, g.converged_pct, g.censored_steps, c[0], c[1], c[2], c[3]
                );
            }
            let _ = writeln!(
                s,
                "steps* counts non-converged runs at the run length; Spearman rho(-gamma, steps*) = {}",
                fmt_opt(sc.gamma_steps_rho, 3)
            );
        }
        if let (Some(h), Some(re)) = (sc.mode(TransferMode::Hybrid), sc.mode(TransferMode::Reuse)) {
            let _ = writeln!(s, "\nhybrid vs reuse (measured / published):");
            let _ = writeln!(
                s,
                "  initial reward change   {:>8}% / +{PAPER_INITIAL_GAIN_PCT}%",
                fmt_opt(rel_change_pct(h.initial_reward, re.initial_reward), 1)
            );
            let _ = writeln!(
                s,
                "  converged runs change   {:>8}% / +{PAPER_CONVERGED_GAIN_PCT}%",
                fmt_opt(rel_change_pct(h.converged_pct, re.converged_pct), 1)
            );
            let _ = writeln!(
                s,
                "  variance change         {:>8}% / -{PAPER_VARIANCE_DECREASE_PCT}%",
                fmt_opt(rel_change_pct(h.variance, re.variance), 1)
            );
        }
    }
    s
}

#[derive(serde::Serialize)]
struct CurveRow<'a> {
    scenario: &'a str,
    mode: &'a str,
    step: usize,
    mean_reward_ma: f64,
}

/// Writes the rendered report to `path` and the smoothed curves to
/// `<path stem>.curves.csv` (every 10th step).
pub fn write_report(report: &Report, path: &Path) -> Result<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, render_report(report)).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let curves = path.with_extension("curves.csv");
    let mut rows = Vec::new();
    for sc in &report.scenarios {
        for m in &sc.modes {
            for (step, v) in m.curve.iter().enumerate().step_by(10) {
                rows.push(CurveRow {
                    scenario: &sc.name,
                    mode: m.mode.as_str(),
                    step,
                    mean_reward_ma: *v,
                });
            }
        }
    }
    write_rows(&curves, &rows)?;
    Ok(curves)
}
