//! Run configuration file.
//!
//! ```toml
//! pattern = "pattern_a"
//! total_steps = 10000
//! seed = 42
//!
//! [env]
//! total_capacity = 6000
//!
//! [slices.0]
//! name = "VoNR"
//! weight = 0.1
//! c1 = 0.5
//! c2 = 10.0
//! traffic = { kind = "vonr" }
//!
//! [ppo]
//! [explore]
//! [transfer]
//! [metrics]
//! [sweep]
//! ```
//!
//! Every section and field is optional; omitted values take the defaults
//! from [`EnvConfig::table_defaults`] and the per-section `Default` impls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drl::{Architecture, ExplorationSchedule, PpoHyperparams, DEFAULT_HIDDEN};
use crate::env::{EnvConfig, SliceName, SliceSpec, DEFAULT_TOTAL_CAPACITY, DEFAULT_WINDOW_LEN};
use crate::error::{Error, Result};
use crate::traffic::{TrafficModel, TrafficSpec, VideoParams, VonrParams, VrSyntheticParams};
use crate::transfer::{TransferConfig, TransferMode};

use super::metrics::MetricParams;
use super::sweep::SweepSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub total_capacity: u64,
    pub window_len_slots: u64,
    pub action_granularity: f64,
    pub min_share: f64,
    pub departure_age_factor: f64,
    pub departure_count: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            total_capacity: DEFAULT_TOTAL_CAPACITY,
            window_len_slots: DEFAULT_WINDOW_LEN,
            action_granularity: 0.1,
            min_share: 0.1,
            departure_age_factor: 2.0,
            departure_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSection {
    pub name: SliceName,
    pub weight: f64,
    pub c1: f64,
    pub c2: f64,
    pub traffic: TrafficSpec,
}

pub fn default_slices() -> BTreeMap<String, SliceSection> {
    let mut m = BTreeMap::new();
    m.insert(
        "0".into(),
        SliceSection {
            name: SliceName::Vonr,
            weight: 0.1,
            c1: 0.5,
            c2: 10.0,
            traffic: TrafficSpec::Vonr(VonrParams::default()),
        },
    );
    m.insert(
        "1".into(),
        SliceSection {
            name: SliceName::Vr,
            weight: 0.7,
            c1: 2.0,
            c2: 1.0,
            traffic: TrafficSpec::VrSynthetic(VrSyntheticParams::default()),
        },
    );
    m.insert(
        "2".into(),
        SliceSection {
            name: SliceName::Video,
            weight: 0.2,
            c1: 1.0,
            c2: 5.0,
            traffic: TrafficSpec::Video(VideoParams::default()),
        },
    );
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_pattern")]
    pub pattern: String,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub expert_keys: Vec<String>,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default = "default_slices")]
    pub slices: BTreeMap<String, SliceSection>,
    #[serde(default)]
    pub ppo: PpoHyperparams,
    #[serde(default)]
    pub explore: ExplorationSchedule,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_pattern() -> String {
    "pattern_a".into()
}
fn default_total_steps() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    42
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

impl Default for ConfigFile {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

/// Fully resolved configuration of one run (or of a sweep's base run).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pattern: String,
    pub env: EnvConfig,
    pub ppo: PpoHyperparams,
    pub explore: ExplorationSchedule,
    pub transfer: TransferConfig,
    pub expert_keys: Vec<String>,
    pub hidden: Vec<usize>,
    pub total_steps: u64,
    pub seed: u64,
    pub metrics: MetricParams,
    pub sweep: Option<SweepSpec>,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self::from_file(ConfigFile::default(), Path::new(".")).expect("defaults are valid")
    }

    pub fn from_file(file: ConfigFile, base_dir: &Path) -> Result<Self> {
        let mut slices = Vec::with_capacity(file.slices.len());
        let mut ids: Vec<(usize, &SliceSection)> = file
            .slices
            .iter()
            .map(|(k, v)| {
                k.parse::<usize>()
                    .map(|id| (id, v))
                    .map_err(|_| Error::Config(format!("slice key {k:?} is not an integer")))
            })
            .collect::<Result<_>>()?;
        ids.sort_by_key(|(id, _)| *id);
        for (expected, (id, s)) in ids.into_iter().enumerate() {
            if id != expected {
                return Err(Error::Config(format!(
                    "slices must be numbered 0..S without gaps; found {id} at position {expected}"
                )));
            }
            slices.push(SliceSpec {
                slice_id: id,
                name: s.name,
                weight: s.weight,
                c1: s.c1,
                c2: s.c2,
                traffic: TrafficModel::from_spec(&s.traffic, base_dir)?,
            });
        }
        let e = &file.env;
        let env = EnvConfig {
            slices,
            total_capacity: e.total_capacity,
            window_len_slots: e.window_len_slots,
            action_granularity: e.action_granularity,
            min_share: e.min_share,
            departure_age_factor: e.departure_age_factor,
            departure_count: e.departure_count,
        };
        let cfg = RunConfig {
            pattern: file.pattern,
            env,
            ppo: file.ppo,
            explore: file.explore,
            transfer: file.transfer,
            expert_keys: file.expert_keys,
            hidden: file.hidden,
            total_steps: file.total_steps,
            seed: file.seed,
            metrics: file.metrics,
            sweep: file.sweep,
            base_dir: base_dir.to_path_buf(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.explore.validate()?;
        self.transfer.validate()?;
        self.metrics.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid hidden layer sizes {:?}", self.hidden)));
        }
        if self.total_steps < self.transfer.duration && self.transfer.mode != TransferMode::None {
            return Err(Error::Config(format!(
                "total_steps ({}) must be >= transfer duration ({})",
                self.total_steps, self.transfer.duration
            )));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        let actions = crate::env::enumerate_action_space(
            self.env.num_slices(),
            self.env.action_granularity,
            self.env.min_share,
        )
        .expect("validated")
        .len();
        Architecture::new(self.env.num_slices(), self.hidden.clone(), actions)
    }

    /// Context key under which an expert trained with this config is stored.
    pub fn expert_key(&self, seed: u64) -> String {
        format!("{}slice/{}/seed{}", self.env.num_slices(), self.pattern, seed)
    }
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    RunConfig::from_file(file, base_dir)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("", Path::new(".")).unwrap();
        assert_eq!(cfg.env, EnvConfig::table_defaults());
        assert_eq!(cfg.total_steps, 10_000);
        assert_eq!(cfg.ppo, PpoHyperparams::default());
        assert_eq!(cfg.architecture().actions, 36);
        assert_eq!(cfg.expert_key(42), "3slice/pattern_a/seed42");
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
pattern = "pattern_b"
total_steps = 500
[env]
total_capacity = 6000
[slices.0]
name = "VoNR"
weight = 0.3
c1 = 0.5
c2 = 10.0
traffic = { kind = "vonr", size_bytes = 60 }
[slices.1]
name = "Video"
weight = 0.7
c1 = 1.0
c2 = 5.0
[slices.1.traffic]
kind = "video"
users = { mean = 10.0, max = 20 }
[ppo]
learning_rate = 0.02
[transfer]
mode = "hybrid"
duration = 100
gamma = 0.5
"#;
        let cfg = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.env.total_capacity, 6000);
        assert_eq!(cfg.env.num_slices(), 2);
        assert_eq!(cfg.env.slices[1].traffic.users.max, 20);
        assert_eq!(cfg.ppo.learning_rate, 0.02);
        assert_eq!(cfg.ppo.batch_size, 4);
        assert_eq!(cfg.transfer.mode, TransferMode::Hybrid);
        assert_eq!(cfg.architecture().actions, 9);
    }

    #[test]
    fn rejects_bad_weights_and_unknown_fields() {
        let text = r#"
[slices.0]
name = "VoNR"
weight = 0.5
c1 = 0.5
c2 = 10.0
traffic = { kind = "vonr" }
[slices.1]
name = "VR"
weight = 0.7
c1 = 2.0
c2 = 1.0
traffic = { kind = "vr_synthetic" }
"#;
        assert!(parse_config(text, Path::new(".")).is_err());
        assert!(parse_config("[env]\nbogus = 1\n", Path::new(".")).is_err());
        assert!(parse_config("[slices.0]\nname=\"VR\"\nweight=1.0\nc1=1.0\nc2=1.0\ntraffic={kind=\"vonr\", bogus=2}\n", Path::new(".")).is_err());
    }

    #[test]
    fn total_steps_must_cover_transfer() {
        let text = "total_steps = 100\n[transfer]\nmode = \"reuse\"\nduration = 3000\n";
        assert!(parse_config(text, Path::new(".")).is_err());
    }

    #[test]
    fn trace_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("vr.csv"), "time_ms,size_bytes\n0.0,1000\n10.0,1200\n").unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            r#"
[slices.0]
name = "VoNR"
weight = 0.3
c1 = 0.5
c2 = 10.0
traffic = { kind = "vonr" }
[slices.1]
name = "VR"
weight = 0.7
c1 = 2.0
c2 = 1.0
traffic = { kind = "vr_trace", path = "vr.csv" }
"#,
        )
        .unwrap();
        let cfg = load_config(&cfg_path).unwrap();
        assert_eq!(cfg.env.slices[1].traffic.kind, crate::traffic::TrafficKind::VrTrace);
    }
}
