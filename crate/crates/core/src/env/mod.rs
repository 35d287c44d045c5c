//! The inter-slice allocation environment.
//!
//! One [`SlicingEnv::step`] is one slicing window: the agent's allocation fixes
//! each slice's per-slot byte budget, slices schedule their users round-robin
//! for `window_len_slots` 1 ms slots, users with too many stale requests
//! leave, and the window's demand mix and latency-based reward are reported.

mod action;
mod reward;
mod scheduler;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::traffic::{
    sample_user_count, SliceTraffic, TrafficModel, TrafficSpec, VideoParams, VonrParams,
    VrSyntheticParams,
};

pub use action::{enumerate_action_space, ActionSpace, Allocation};
pub use reward::{compute_reward, compute_state, slice_score, StateVector};
pub use scheduler::{simulate_window, slot_budget, SliceKpis, SliceQueues, WindowKpis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceName {
    #[serde(rename = "VoNR")]
    Vonr,
    #[serde(rename = "VR")]
    Vr,
    #[serde(rename = "Video")]
    Video,
}

impl std::fmt::Display for SliceName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SliceName::Vonr => "VoNR",
            SliceName::Vr => "VR",
            SliceName::Video => "Video",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub slice_id: usize,
    pub name: SliceName,
    pub weight: f64,
    /// Sigmoid slope (1/ms).
    pub c1: f64,
    /// SLA inflection latency (ms).
    pub c2: f64,
    pub traffic: TrafficModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub slices: Vec<SliceSpec>,
    /// Bytes per 1 ms slot across all PRBs.
    pub total_capacity: u64,
    pub window_len_slots: u64,
    pub action_granularity: f64,
    pub min_share: f64,
    pub departure_age_factor: f64,
    pub departure_count: usize,
}

/// Bytes per slot. Mean offered load of the default traffic is about 11% of
/// this; the VR slice's 4 kB frames are what make the allocation matter.
pub const DEFAULT_TOTAL_CAPACITY: u64 = 6_000;
pub const DEFAULT_WINDOW_LEN: u64 = 100;

impl EnvConfig {
    /// Three slices (VoNR, VR, Video) with the reference SLA weights and
    /// inflection points and synthetic VR traffic.
    pub fn table_defaults() -> Self {
        let base = std::path::Path::new(".");
        let model = |spec: TrafficSpec| TrafficModel::from_spec(&spec, base).expect("valid defaults");
        EnvConfig {
            slices: vec![
                SliceSpec {
                    slice_id: 0,
                    name: SliceName::Vonr,
                    weight: 0.1,
                    c1: 0.5,
                    c2: 10.0,
                    traffic: model(TrafficSpec::Vonr(VonrParams::default())),
                },
                SliceSpec {
                    slice_id: 1,
                    name: SliceName::Vr,
                    weight: 0.7,
                    c1: 2.0,
                    c2: 1.0,
                    traffic: model(TrafficSpec::VrSynthetic(VrSyntheticParams::default())),
                },
                SliceSpec {
                    slice_id: 2,
                    name: SliceName::Video,
                    weight: 0.2,
                    c1: 1.0,
                    c2: 5.0,
                    traffic: model(TrafficSpec::Video(VideoParams::default())),
                },
            ],
            total_capacity: DEFAULT_TOTAL_CAPACITY,
            window_len_slots: DEFAULT_WINDOW_LEN,
            action_granularity: 0.1,
            min_share: 0.1,
            departure_age_factor: 2.0,
            departure_count: 5,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.slices.iter().map(|s| s.weight).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.slices.len();
        if s < 2 {
            return Err(Error::Config(format!("need at least 2 slices, got {s}")));
        }
        for (i, sl) in self.slices.iter().enumerate() {
            if sl.slice_id != i {
                return Err(Error::Config(format!("slice {i} has id {}", sl.slice_id)));
            }
            if !(sl.weight > 0.0 && sl.c1 > 0.0 && sl.c2 > 0.0) {
                return Err(Error::Config(format!(
                    "slice {i}: weight, c1 and c2 must be > 0"
                )));
            }
            sl.traffic.validate()?;
        }
        let w = self.weight_sum();
        if (w - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("slice weights sum to {w}, expected 1")));
        }
        if self.window_len_slots < 1 {
            return Err(Error::Config("window_len_slots must be >= 1".into()));
        }
        if self.total_capacity == 0 {
            return Err(Error::Config("total_capacity must be > 0".into()));
        }
        if !(self.departure_age_factor > 0.0) {
            return Err(Error::Config("departure_age_factor must be > 0".into()));
        }
        enumerate_action_space(s, self.action_granularity, self.min_share)?;
        Ok(())
    }

    /// Mean offered load over all slices in bytes per slot.
    pub fn mean_offered_bytes_per_slot(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.traffic.mean_offered_bytes_per_ms())
            .sum()
    }
}

/// Cumulative byte accounting since reset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteTotals {
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub kpis: WindowKpis,
}

/// The slicing environment. Cloning snapshots the full state, including all
/// RNG streams, so a clone replays exactly the same traffic.
#[derive(Debug, Clone)]
pub struct SlicingEnv {
    config: Arc<EnvConfig>,
    actions: Arc<ActionSpace>,
    traffic: Vec<SliceTraffic>,
    queues: Vec<SliceQueues>,
    count_rng: Option<ChaCha8Rng>,
    window: u64,
    totals: ByteTotals,
    state: Option<StateVector>,
}

impl SlicingEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let actions = enumerate_action_space(
            config.num_slices(),
            config.action_granularity,
            config.min_share,
        )?;
        Ok(Self {
            traffic: Vec::new(),
            queues: Vec::new(),
            count_rng: None,
            window: 0,
            totals: ByteTotals::default(),
            state: None,
            actions: Arc::new(actions),
            config: Arc::new(config),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn shared_action_space(&self) -> Arc<ActionSpace> {
        Arc::clone(&self.actions)
    }

    pub fn totals(&self) -> ByteTotals {
        self.totals
    }

    pub fn queues(&self) -> &[SliceQueues] {
        &self.queues
    }

    pub fn pending_bytes(&self) -> u64 {
        self.queues.iter().map(|q| q.pending_bytes()).sum()
    }

    /// Index of the next window to be simulated.
    pub fn window_index(&self) -> u64 {
        self.window
    }

    /// State observed after the most recent window.
    pub fn state(&self) -> Option<&StateVector> {
        self.state.as_ref()
    }

    /// Clears queues, seeds every RNG stream from `seed` and runs one warm-up
    /// window under the allocation nearest to equal shares.
    pub fn reset(&mut self, seed: u64) -> StateVector {
        let cfg = Arc::clone(&self.config);
        self.traffic = cfg
            .slices
            .iter()
            .map(|s| SliceTraffic::new(s.traffic.clone(), s.slice_id, seeding::mix(seed, 100)))
            .collect();
        self.queues = vec![SliceQueues::default(); cfg.num_slices()];
        self.count_rng = Some(seeding::rng(seed, 200));
        self.window = 0;
        self.totals = ByteTotals::default();

        let s = cfg.num_slices();
        let warmup = self.actions.nearest(&vec![1.0 / s as f64; s]);
        let shares = self.actions.get(warmup).expect("in range").shares.clone();
        let out = self.run_window(&shares);
        self.state = Some(out.state.clone());
        out.state
    }

    pub fn step(&mut self, action_id: usize) -> Result<StepOutcome> {
        if self.count_rng.is_none() {
            return Err(Error::Env("step called before reset".into()));
        }
        let shares = self
            .actions
            .get(action_id)
            .ok_or_else(|| {
                Error::Env(format!(
                    "action {action_id} out of range (|A| = {})",
                    self.actions.len()
                ))
            })?
            .shares
            .clone();
        let out = self.run_window(&shares);
        self.state = Some(out.state.clone());
        Ok(out)
    }

    fn run_window(&mut self, shares: &[f64]) -> StepOutcome {
        let cfg = Arc::clone(&self.config);
        let start = self.window * cfg.window_len_slots;
        let len = cfg.window_len_slots;

        let rng = self.count_rng.as_mut().expect("reset");
        let counts: Vec<u32> = cfg
            .slices
            .iter()
            .map(|s| sample_user_count(rng, s.traffic.users.mean, s.traffic.users.max))
            .collect();
        let arrivals: Vec<_> = self
            .traffic
            .iter_mut()
            .zip(&counts)
            .map(|(t, &n)| t.generate_window(n as usize, start, len))
            .collect();

        let mut slices = simulate_window(
            &mut self.queues,
            &arrivals,
            shares,
            cfg.total_capacity,
            start,
            len,
        );
        self.apply_departures(&mut slices, start + len);

        for k in &slices {
            self.totals.arrived += k.demand_bytes;
            self.totals.served += k.bytes_served;
            self.totals.dropped += k.bytes_dropped;
        }
        let latencies: Vec<f64> = slices.iter().map(|k| k.avg_latency_ms).collect();
        let reward = compute_reward(&latencies, &cfg.slices);
        let state = compute_state(&slices.iter().map(|k| k.demand_bytes).collect::<Vec<_>>());
        self.window += 1;
        StepOutcome {
            state,
            reward,
            kpis: WindowKpis { slices, reward },
        }
    }

    /// A user leaves when more than `departure_count` of its pending packets
    /// are older than `departure_age_factor * c2` at the window end. Its
    /// queue is dropped and its stream restarts as a new user.
    fn apply_departures(&mut self, kpis: &mut [SliceKpis], window_end: u64) {
        let cfg = &self.config;
        for (s, spec) in cfg.slices.iter().enumerate() {
            let age_limit = cfg.departure_age_factor * spec.c2;
            let q = &mut self.queues[s];
            for user in 0..q.num_user_slots() {
                let stale = q
                    .user_queue(user)
                    .map(|uq| {
                        uq.iter()
                            .filter(|p| (window_end - p.arrival_slot) as f64 > age_limit)
                            .count()
                    })
                    .unwrap_or(0);
                if stale > cfg.departure_count {
                    kpis[s].bytes_dropped += q.drop_user(user);
                    kpis[s].users_departed += 1;
                    self.traffic[s].reset_user(user);
                }
            }
        }
    }
}
