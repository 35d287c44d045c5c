//! Per-slice downlink traffic: packet arrival models, user-count sampling and
//! windowed arrival generation.
//!
//! Every user owns an independent stream (its own RNG, residual interarrival
//! and trace cursor), so the arrivals of one user never depend on what happened
//! to another user or on the allocation the agent chose.

mod pareto;
mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub use pareto::{
    calibrate_truncated_pareto, clamped_pareto_mean, pareto_from_uniform, sample_truncated_pareto,
    TruncatedPareto, DEFAULT_SHAPE,
};
pub use trace::{load_trace, parse_trace, write_trace, Trace, TraceEntry, TRACE_HEADER};

/// A queued downlink request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub arrival_slot: u64,
    pub size: u32,
    pub remaining: u32,
    pub user_id: usize,
    pub slice_id: usize,
}

impl Packet {
    pub fn new(arrival_slot: u64, size: u32, user_id: usize, slice_id: usize) -> Self {
        debug_assert!(size >= 1);
        Self {
            arrival_slot,
            size,
            remaining: size,
            user_id,
            slice_id,
        }
    }
}

/// Active-user count model: `min(Poisson(mean), max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserCountSpec {
    pub mean: f64,
    pub max: u32,
}

pub fn sample_user_count<R: Rng + ?Sized>(rng: &mut R, mean: f64, max: u32) -> u32 {
    let poisson = Poisson::new(mean).expect("user-count mean validated at load");
    let draw: f64 = poisson.sample(rng);
    clamp_user_count(draw as u64, max)
}

pub fn clamp_user_count(draw: u64, max: u32) -> u32 {
    draw.min(max as u64) as u32
}

/// Exact `E[min(Poisson(mean), max)]` by pmf summation.
pub fn clamped_poisson_mean(mean: f64, max: u32) -> f64 {
    let mut pmf = (-mean).exp();
    let mut below = 0.0;
    let mut mass_below = 0.0;
    for k in 0..max {
        below += k as f64 * pmf;
        mass_below += pmf;
        pmf *= mean / (k + 1) as f64;
    }
    below + max as f64 * (1.0 - mass_below)
}

// ---------------------------------------------------------------------------
// Configuration-level traffic description
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoParams {
    pub interarrival_mean_ms: f64,
    pub interarrival_max_ms: f64,
    pub size_mean_bytes: f64,
    pub size_max_bytes: f64,
    pub shape: f64,
    pub users: UserCountSpec,
}

impl Default for VideoParams {
    fn default() -> Self {
        Self {
            interarrival_mean_ms: 6.0,
            interarrival_max_ms: 12.5,
            size_mean_bytes: 100.0,
            size_max_bytes: 250.0,
            shape: DEFAULT_SHAPE,
            users: UserCountSpec { mean: 20.0, max: 43 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VonrParams {
    pub interarrival_min_ms: f64,
    pub interarrival_max_ms: f64,
    pub size_bytes: u32,
    pub users: UserCountSpec,
}

impl Default for VonrParams {
    fn default() -> Self {
        Self {
            interarrival_min_ms: 0.0,
            interarrival_max_ms: 160.0,
            size_bytes: 40,
            users: UserCountSpec { mean: 70.0, max: 104 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrSyntheticParams {
    pub frame_rate_hz: f64,
    pub size_mean_bytes: f64,
    pub size_std_bytes: f64,
    pub size_min_bytes: f64,
    pub size_max_bytes: f64,
    pub users: UserCountSpec,
}

impl Default for VrSyntheticParams {
    fn default() -> Self {
        Self {
            frame_rate_hz: 72.0,
            size_mean_bytes: 4000.0,
            size_std_bytes: 1000.0,
            size_min_bytes: 500.0,
            size_max_bytes: 8000.0,
            users: UserCountSpec { mean: 1.0, max: 7 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrTraceParams {
    pub path: PathBuf,
    #[serde(default = "default_vr_users")]
    pub users: UserCountSpec,
}

fn default_vr_users() -> UserCountSpec {
    VrSyntheticParams::default().users
}

/// Traffic model as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSpec {
    Video(VideoParams),
    Vonr(VonrParams),
    VrSynthetic(VrSyntheticParams),
    VrTrace(VrTraceParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Video,
    Vonr,
    VrSynthetic,
    VrTrace,
}

// ---------------------------------------------------------------------------
// Runtime traffic model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Interarrival {
    Pareto(TruncatedPareto),
    Uniform { min_ms: f64, max_ms: f64 },
    /// Fixed period; each stream starts at a random phase.
    Periodic { period_ms: f64 },
}

impl Interarrival {
    pub fn mean(&self) -> f64 {
        match self {
            Interarrival::Pareto(p) => p.mean(),
            Interarrival::Uniform { min_ms, max_ms } => 0.5 * (min_ms + max_ms),
            Interarrival::Periodic { period_ms } => *period_ms,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Interarrival::Pareto(p) => p.sample(rng),
            Interarrival::Uniform { min_ms, max_ms } => {
                min_ms + (max_ms - min_ms) * rng.random::<f64>()
            }
            Interarrival::Periodic { period_ms } => *period_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizeModel {
    Pareto(TruncatedPareto),
    Constant(u32),
    /// Gaussian restricted to `[min, max]` by rejection.
    TruncatedNormal {
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
    },
}

impl SizeModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let bytes = match self {
            SizeModel::Pareto(p) => p.sample(rng),
            SizeModel::Constant(b) => return *b,
            SizeModel::TruncatedNormal {
                mean,
                std,
                min,
                max,
            } => {
                let normal = rand_distr::Normal::new(*mean, *std).expect("validated");
                let mut x = normal.sample(rng);
                let mut tries = 0;
                while (x < *min || x > *max) && tries < 64 {
                    x = normal.sample(rng);
                    tries += 1;
                }
                x.clamp(*min, *max)
            }
        };
        (bytes.round() as u32).max(1)
    }

    /// Mean of the continuous model (before rounding to bytes).
    pub fn mean(&self) -> f64 {
        match self {
            SizeModel::Pareto(p) => p.mean(),
            SizeModel::Constant(b) => *b as f64,
            SizeModel::TruncatedNormal {
                mean,
                std,
                min,
                max,
            } => truncated_normal_mean(*mean, *std, *min, *max),
        }
    }
}

fn truncated_normal_mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    // mu + sigma (phi(a) - phi(b)) / (Phi(b) - Phi(a)) via Simpson quadrature of the cdf.
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let n = 2000;
    let h = (b - a) / n as f64;
    let mut mass = phi(a) + phi(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        mass += w * phi(a + i as f64 * h);
    }
    mass *= h / 3.0;
    mu + sigma * (phi(a) - phi(b)) / mass
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSource {
    Generated {
        interarrival: Interarrival,
        size: SizeModel,
    },
    Trace(Arc<Trace>),
}

/// Calibrated, ready-to-sample traffic model for one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub kind: TrafficKind,
    pub source: ArrivalSource,
    pub users: UserCountSpec,
}

impl TrafficModel {
    /// Builds a model from its file description; trace paths are resolved
    /// relative to `base_dir`.
    pub fn from_spec(spec: &TrafficSpec, base_dir: &Path) -> Result<Self> {
        let model = match spec {
            TrafficSpec::Video(p) => TrafficModel {
                kind: TrafficKind::Video,
                source: ArrivalSource::Generated {
                    interarrival: Interarrival::Pareto(TruncatedPareto::calibrated(
                        p.shape,
                        p.interarrival_mean_ms,
                        p.interarrival_max_ms,
                    )?),
                    size: SizeModel::Pareto(TruncatedPareto::calibrated(
                        p.shape,
                        p.size_mean_bytes,
                        p.size_max_bytes,
                    )?),
                },
                users: p.users,
            },
            TrafficSpec::Vonr(p) => {
                if !(p.interarrival_max_ms > p.interarrival_min_ms && p.interarrival_min_ms >= 0.0)
                {
                    return Err(Error::Config("VoNR interarrival range is empty".into()));
                }
                if p.size_bytes == 0 {
                    return Err(Error::Config("VoNR packet size must be >= 1".into()));
                }
                TrafficModel {
                    kind: TrafficKind::Vonr,
                    source: ArrivalSource::Generated {
                        interarrival: Interarrival::Uniform {
                            min_ms: p.interarrival_min_ms,
                            max_ms: p.interarrival_max_ms,
                        },
                        size: SizeModel::Constant(p.size_bytes),
                    },
                    users: p.users,
                }
            }
            TrafficSpec::VrSynthetic(p) => {
                if !(p.frame_rate_hz > 0.0
                    && p.size_std_bytes > 0.0
                    && p.size_min_bytes >= 1.0
                    && p.size_max_bytes >= p.size_mean_bytes
                    && p.size_mean_bytes >= p.size_min_bytes)
                {
                    return Err(Error::Config(format!("invalid VR synthetic parameters {p:?}")));
                }
                TrafficModel {
                    kind: TrafficKind::VrSynthetic,
                    source: ArrivalSource::Generated {
                        interarrival: Interarrival::Periodic {
                            period_ms: 1000.0 / p.frame_rate_hz,
                        },
                        size: SizeModel::TruncatedNormal {
                            mean: p.size_mean_bytes,
                            std: p.size_std_bytes,
                            min: p.size_min_bytes,
                            max: p.size_max_bytes,
                        },
                    },
                    users: p.users,
                }
            }
            TrafficSpec::VrTrace(p) => {
                let path = if p.path.is_absolute() {
                    p.path.clone()
                } else {
                    base_dir.join(&p.path)
                };
                TrafficModel {
                    kind: TrafficKind::VrTrace,
                    source: ArrivalSource::Trace(Arc::new(load_trace(path)?)),
                    users: p.users,
                }
            }
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_trace(trace: Trace, users: UserCountSpec) -> Self {
        TrafficModel {
            kind: TrafficKind::VrTrace,
            source: ArrivalSource::Trace(Arc::new(trace)),
            users,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.users.mean > 0.0 && self.users.mean.is_finite()) {
            return Err(Error::Config(format!(
                "user-count mean must be > 0, got {}",
                self.users.mean
            )));
        }
        if self.users.max < 1 {
            return Err(Error::Config("user-count max must be >= 1".into()));
        }
        Ok(())
    }

    /// Long-run offered load in bytes per ms at the mean (clamped) user count.
    pub fn mean_offered_bytes_per_ms(&self) -> f64 {
        let users = clamped_poisson_mean(self.users.mean, self.users.max);
        let per_user = match &self.source {
            ArrivalSource::Generated { interarrival, size } => size.mean() / interarrival.mean(),
            ArrivalSource::Trace(t) => {
                if t.is_empty() {
                    0.0
                } else {
                    t.mean_size() * t.len() as f64 / t.period_ms()
                }
            }
        };
        users * per_user
    }
}

// ---------------------------------------------------------------------------
// Windowed generation
// ---------------------------------------------------------------------------

/// Emits packets at `*next_arrival` while it falls before `window_end`.
/// `draw` yields the size of the packet being emitted and the gap to the next one.
pub(crate) fn fill_window(
    next_arrival: &mut f64,
    window_end: f64,
    mut draw: impl FnMut() -> (u32, f64),
    mut emit: impl FnMut(f64, u32),
) {
    while *next_arrival < window_end {
        let (size, gap) = draw();
        emit(*next_arrival, size);
        *next_arrival += gap;
    }
}

#[derive(Debug, Clone)]
struct UserStream {
    rng: ChaCha8Rng,
    /// Absolute time (ms) of the next arrival; `None` until the stream starts.
    next_arrival: Option<f64>,
    /// Trace replay: index of the next entry and the time origin of this pass.
    cursor: usize,
    trace_origin: f64,
    /// Trace replay exhausted in the current window; restarts at the next one.
    trace_idle: bool,
}

/// Arrival generator for all user streams of one slice.
#[derive(Debug, Clone)]
pub struct SliceTraffic {
    slice_id: usize,
    model: TrafficModel,
    seed: u64,
    streams: Vec<UserStream>,
    wrap_logged: bool,
}

impl SliceTraffic {
    pub fn new(model: TrafficModel, slice_id: usize, seed: u64) -> Self {
        Self {
            slice_id,
            model,
            seed: seeding::mix(seed, slice_id as u64),
            streams: Vec::new(),
            wrap_logged: false,
        }
    }

    pub fn model(&self) -> &TrafficModel {
        &self.model
    }

    fn ensure_streams(&mut self, n: usize) {
        while self.streams.len() < n {
            let user = self.streams.len() as u64;
            self.streams.push(UserStream {
                rng: seeding::rng(self.seed, user),
                next_arrival: None,
                cursor: 0,
                trace_origin: 0.0,
                trace_idle: false,
            });
        }
    }

    /// Generates the arrivals of `active_users` streams for the window
    /// `[window_start, window_start + window_len)`. Streams above the active
    /// count are paused: their pending arrival is shifted by the window length.
    ///
    /// Packets are ordered by arrival slot, then user id.
    pub fn generate_window(
        &mut self,
        active_users: usize,
        window_start: u64,
        window_len: u64,
    ) -> Vec<Packet> {
        let active = active_users.min(self.model.users.max as usize);
        self.ensure_streams(active);
        let start = window_start as f64;
        let end = (window_start + window_len) as f64;
        let max_users = self.model.users.max.max(1) as f64;
        let slice_id = self.slice_id;
        let mut out = Vec::new();
        let mut wrapped = false;

        for (user, stream) in self.streams.iter_mut().enumerate() {
            if user >= active {
                if let Some(t) = stream.next_arrival.as_mut() {
                    *t += window_len as f64;
                }
                stream.trace_origin += window_len as f64;
                continue;
            }
            let mut emit = |t: f64, size: u32| {
                out.push(Packet::new(t.floor() as u64, size, user, slice_id));
            };
            match &self.model.source {
                ArrivalSource::Generated { interarrival, size } => {
                    let rng = &mut stream.rng;
                    let next = stream.next_arrival.get_or_insert_with(|| match interarrival {
                        Interarrival::Periodic { period_ms } => start + period_ms * rng.random::<f64>(),
                        other => start + other.sample(rng),
                    });
                    fill_window(
                        next,
                        end,
                        || {
                            let s = size.sample(rng);
                            (s, interarrival.sample(rng))
                        },
                        &mut emit,
                    );
                }
                ArrivalSource::Trace(trace) => {
                    let entries = trace.entries();
                    if entries.is_empty() {
                        continue;
                    }
                    if stream.next_arrival.is_none() {
                        stream.next_arrival = Some(start);
                        stream.cursor = 0;
                        stream.trace_origin = start + user as f64 * trace.period_ms() / max_users;
                        stream.trace_idle = false;
                    }
                    if stream.trace_idle {
                        stream.trace_idle = false;
                        stream.cursor = 0;
                        stream.trace_origin = start;
                    }
                    while stream.cursor < entries.len() {
                        let e = entries[stream.cursor];
                        let t = stream.trace_origin + e.time_ms;
                        if t >= end {
                            break;
                        }
                        emit(t.max(start), e.size_bytes);
                        stream.cursor += 1;
                    }
                    if stream.cursor >= entries.len() {
                        stream.trace_idle = true;
                        wrapped = true;
                    }
                }
            }
        }
        if wrapped && !self.wrap_logged {
            log::info!("slice {}: trace exhausted, replay wraps to start", self.slice_id);
            self.wrap_logged = true;
        }
        out.sort_by_key(|p| (p.arrival_slot, p.user_id));
        out
    }

    /// Replaces user `user` with a fresh one (used when a user departs).
    pub fn reset_user(&mut self, user: usize) {
        if let Some(s) = self.streams.get_mut(user) {
            s.next_arrival = None;
            s.cursor = 0;
            s.trace_origin = 0.0;
            s.trace_idle = false;
        }
    }
}
