//! CSV outputs: per-step traces and per-run metric rows.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::run::RunTrace;

pub fn step_csv_header(num_slices: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "action_id", "source", "reward"].iter().map(|s| s.to_string()).collect();
    h.extend((0..num_slices).map(|i| format!("kappa_{i}")));
    h.extend((0..num_slices).map(|i| format!("l_{i}")));
    h.push("theta".into());
    h.push("epsilon".into());
    h
}

/// Writes the per-step CSV. An aborted run also gets `<path>.aborted`
/// holding the failure message, marking the CSV as partial.
pub fn write_step_csv(path: &Path, trace: &RunTrace, num_slices: usize) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(step_csv_header(num_slices))?;
    for r in &trace.records {
        let mut row = vec![
            r.step.to_string(),
            r.action.to_string(),
            r.source.as_str().to_string(),
            r.reward.to_string(),
        ];
        row.extend(r.kappa.iter().map(f64::to_string));
        row.extend(r.latencies.iter().map(f64::to_string));
        row.push(r.theta.to_string());
        row.push(r.epsilon.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let marker = aborted_marker(path);
    match &trace.aborted {
        Some(msg) => {
            let mut f = File::create(&marker).map_err(|e| Error::io(format!("creating {}", marker.display()), e))?;
            writeln!(f, "{msg}").map_err(|e| Error::io(format!("writing {}", marker.display()), e))?;
        }
        None => {
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| Error::io(format!("removing {}", marker.display()), e))?;
            }
        }
    }
    Ok(())
}

pub fn aborted_marker(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".aborted");
    PathBuf::from(s)
}

/// Reads the reward column of a per-step CSV.
pub fn read_step_rewards(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "reward")
        .ok_or_else(|| Error::Config(format!("{}: no reward column", path.display())))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec[col]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: bad reward {:?}: {e}", path.display(), &rec[col])))
        })
        .collect()
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub mode: String,
    pub seed: u64,
    pub theta0: Option<f64>,
    pub nu: Option<f64>,
    pub gamma: Option<f64>,
    pub initial_reward: f64,
    pub variance: f64,
    pub steps_to_converge: Option<u64>,
    pub converged: bool,
    pub avg_normalized_reward: f64,
}

/// One row of `run_index.csv`: the remaining per-run fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndexRow {
    pub run_id: String,
    pub scenario: String,
    pub replicate: u32,
    pub explore_decay: f64,
    pub oracle_avg: f64,
    pub steps: u64,
    pub aborted: bool,
    pub step_csv: String,
    pub learner: u64,
    pub expert_reuse: u64,
    pub distilled: u64,
    pub random_exploration: u64,
    pub learner_in_transfer: u64,
    pub expert_reuse_in_transfer: u64,
    pub distilled_in_transfer: u64,
    pub random_exploration_in_transfer: u64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use crate::harness::run::run_loop;

    #[test]
    fn header_layout() {
        assert_eq!(
            step_csv_header(2).join(","),
            "step,action_id,source,reward,kappa_0,kappa_1,l_0,l_1,theta,epsilon"
        );
    }

    #[test]
    fn step_csv_round_trips_rewards_and_flags_aborts() {
        let mut cfg = RunConfig::defaults();
        cfg.total_steps = 20;
        let mut trace = run_loop(&cfg, &cfg.transfer, &[], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/run.csv");
        write_step_csv(&p, &trace, 3).unwrap();
        assert_eq!(read_step_rewards(&p).unwrap(), trace.rewards());
        assert!(!aborted_marker(&p).exists());
        trace.aborted = Some("step 3: boom".into());
        write_step_csv(&p, &trace, 3).unwrap();
        assert!(aborted_marker(&p).exists());
    }

    #[test]
    fn metrics_rows_round_trip() {
        let row = MetricsRow {
            run_id: "r1".into(),
            mode: "hybrid".into(),
            seed: 7,
            theta0: Some(0.9),
            nu: Some(0.999),
            gamma: None,
            initial_reward: 0.123456789012345,
            variance: 1e-5,
            steps_to_converge: None,
            converged: false,
            avg_normalized_reward: 0.7,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_rows(&p, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_rows::<MetricsRow>(&p).unwrap(), vec![row]);
    }
}
