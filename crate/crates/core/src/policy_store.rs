//! File-based policy directory: `<dir>/<context_key>.policy`, one TOML
//! document per policy with weights written as 17-significant-digit decimals
//! so every `f64` survives the round trip exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::drl::{Architecture, PolicyWeights, Role};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const EXTENSION: &str = "policy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
    pub action_space_hash: String,
}

impl ArchitectureDescriptor {
    pub fn architecture(&self) -> Architecture {
        Architecture::new(self.state_dim, self.hidden.clone(), self.actions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetadata {
    pub training_steps: u64,
    pub final_avg_reward: f64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Traffic pattern the policy was trained on.
    #[serde(default)]
    pub source_pattern: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRecord {
    pub format_version: u32,
    pub context_key: String,
    pub role: Role,
    pub architecture: ArchitectureDescriptor,
    pub weights: Vec<f64>,
    pub metadata: PolicyMetadata,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: u32,
    context_key: String,
    role: Role,
    architecture: ArchitectureDescriptor,
    metadata: PolicyMetadata,
    weights: Vec<String>,
}

impl PolicyRecord {
    pub fn new(
        context_key: impl Into<String>,
        weights: &PolicyWeights,
        action_space_hash: impl Into<String>,
        metadata: PolicyMetadata,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            context_key: context_key.into(),
            role: Role::Expert,
            architecture: ArchitectureDescriptor {
                state_dim: weights.arch.input,
                hidden: weights.arch.hidden.clone(),
                actions: weights.arch.actions,
                action_space_hash: action_space_hash.into(),
            },
            weights: weights.params.clone(),
            metadata,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.architecture.architecture().param_count();
        if self.weights.len() != expected {
            return Err(Error::Policy(format!(
                "{}: {} weights, architecture needs {expected}",
                self.context_key,
                self.weights.len()
            )));
        }
        if let Some(bad) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Policy(format!("{}: weight {bad} is not finite", self.context_key)));
        }
        validate_key(&self.context_key)
    }

    pub fn policy_weights(&self) -> Result<PolicyWeights> {
        PolicyWeights::from_params(self.architecture.architecture(), self.weights.clone(), self.role)
    }
}

fn validate_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && !key.starts_with('/')
        && key
            .split('/')
            .all(|part| !part.is_empty() && part != "." && part != "..")
        && !key.contains('\\');
    if ok {
        Ok(())
    } else {
        Err(Error::Policy(format!("invalid context key {key:?}")))
    }
}

pub fn policy_path(dir: &Path, context_key: &str) -> PathBuf {
    dir.join(format!("{context_key}.{EXTENSION}"))
}

pub fn format_weight(w: f64) -> String {
    format!("{w:.16e}")
}

pub fn encode_policy(record: &PolicyRecord) -> Result<String> {
    record.validate()?;
    let file = PolicyFile {
        format_version: record.format_version,
        context_key: record.context_key.clone(),
        role: record.role,
        architecture: record.architecture.clone(),
        metadata: record.metadata.clone(),
        weights: record.weights.iter().map(|&w| format_weight(w)).collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Policy(format!("encoding policy: {e}")))
}

pub fn decode_policy(text: &str) -> Result<PolicyRecord> {
    let file: PolicyFile =
        toml::from_str(text).map_err(|e| Error::Policy(format!("malformed policy file: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Policy(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let weights = file
        .weights
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<f64>()
                .map_err(|_| Error::Policy(format!("weight {i} is not a number: {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let record = PolicyRecord {
        format_version: file.format_version,
        context_key: file.context_key,
        role: file.role,
        architecture: file.architecture,
        weights,
        metadata: file.metadata,
    };
    record.validate()?;
    Ok(record)
}

/// Writes the record to `<dir>/<context_key>.policy` via a temporary file
/// and rename. Refuses to replace an existing file unless `overwrite`.
pub fn save_policy(dir: &Path, record: &PolicyRecord, overwrite: bool) -> Result<PathBuf> {
    let text = encode_policy(record)?;
    let path = policy_path(dir, &record.context_key);
    if path.exists() && !overwrite {
        return Err(Error::Policy(format!(
            "policy {:?} already exists at {} (pass overwrite to replace)",
            record.context_key,
            path.display()
        )));
    }
    let parent = path.parent().unwrap_or(dir);
    std::fs::create_dir_all(parent)
        .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    let tmp = path.with_extension(format!("{EXTENSION}.tmp"));
    std::fs::write(&tmp, text).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, &path)
        .map_err(|e| Error::io(format!("renaming into {}", path.display()), e))?;
    Ok(path)
}

/// Every context key present in `dir`, sorted.
pub fn list_keys(dir: &Path) -> Vec<String> {
    if !dir.is_dir() {
        return Vec::new();
    }
    let mut keys: Vec<String> = WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| e.path().extension().is_some_and(|x| x == EXTENSION))
        .filter_map(|e| {
            let rel = e.path().strip_prefix(dir).ok()?.with_extension("");
            Some(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/"),
            )
        })
        .collect();
    keys.sort();
    keys
}

/// Up to three available keys closest to `key` by edit distance.
fn nearest_keys(available: &[String], key: &str) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = available
        .iter()
        .map(|k| (strsim::levenshtein(k, key), k))
        .collect();
    scored.sort();
    scored.into_iter().take(3).map(|(_, k)| k.clone()).collect()
}

fn missing_key_error(dir: &Path, key: &str) -> Error {
    let available = list_keys(dir);
    if available.is_empty() {
        Error::Policy(format!(
            "no policy {key:?} in {}: directory holds no policies []",
            dir.display()
        ))
    } else {
        Error::Policy(format!(
            "no policy {key:?} in {}; nearest available: [{}]",
            dir.display(),
            nearest_keys(&available, key).join(", ")
        ))
    }
}

/// Exact-match resolution of a requested context.
pub fn resolve_context(dir: &Path, requested_key: &str) -> Result<String> {
    validate_key(requested_key)?;
    if policy_path(dir, requested_key).is_file() {
        Ok(requested_key.to_string())
    } else {
        Err(missing_key_error(dir, requested_key))
    }
}

/// Reads and validates a policy without checking it against a run.
pub fn read_policy(dir: &Path, context_key: &str) -> Result<PolicyRecord> {
    let key = resolve_context(dir, context_key)?;
    let path = policy_path(dir, &key);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let record = decode_policy(&text)?;
    if record.context_key != key {
        return Err(Error::Policy(format!(
            "{} declares context key {:?}",
            path.display(),
            record.context_key
        )));
    }
    Ok(record)
}

/// Loads an expert for a run, refusing records whose architecture or action
/// space differ from the run's.
pub fn load_policy(
    dir: &Path,
    context_key: &str,
    expected: &ArchitectureDescriptor,
) -> Result<PolicyRecord> {
    let mut record = read_policy(dir, context_key)?;
    let got = &record.architecture;
    if got.action_space_hash != expected.action_space_hash {
        return Err(Error::Policy(format!(
            "{context_key}: action-space hash mismatch (policy {}, run {}); the expert was trained on a different action space",
            got.action_space_hash, expected.action_space_hash
        )));
    }
    if got.state_dim != expected.state_dim
        || got.hidden != expected.hidden
        || got.actions != expected.actions
    {
        return Err(Error::Policy(format!(
            "{context_key}: architecture {:?}/{:?}/{} does not match run {:?}/{:?}/{}",
            got.state_dim, got.hidden, got.actions, expected.state_dim, expected.hidden, expected.actions
        )));
    }
    record.role = Role::Expert;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn record(key: &str) -> PolicyRecord {
        let mut rng = seeding::rng(3, 3);
        let w = PolicyWeights::random(Architecture::new(3, vec![5], 6), Role::Learner, &mut rng);
        PolicyRecord::new(
            key,
            &w,
            "abc123",
            PolicyMetadata {
                training_steps: 10,
                final_avg_reward: 0.25,
                created_at: 0,
                source_pattern: "pattern_a".into(),
            },
        )
    }

    fn expected() -> ArchitectureDescriptor {
        ArchitectureDescriptor {
            state_dim: 3,
            hidden: vec![5],
            actions: 6,
            action_space_hash: "abc123".into(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("3slice/pattern1/seed42");
        r.weights[0] = 0.1 + 0.2;
        r.weights[1] = -1.0e-300;
        r.weights[2] = f64::MIN_POSITIVE;
        let path = save_policy(dir.path(), &r, false).unwrap();
        assert!(path.ends_with("3slice/pattern1/seed42.policy"));
        let back = load_policy(dir.path(), "3slice/pattern1/seed42", &expected()).unwrap();
        assert_eq!(back, r);
        for (a, b) in back.weights.iter().zip(&r.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn overwrite_needs_flag() {
        let dir = tempfile::tempdir().unwrap();
        let r = record("k");
        save_policy(dir.path(), &r, false).unwrap();
        assert!(save_policy(dir.path(), &r, false).is_err());
        save_policy(dir.path(), &r, true).unwrap();
    }

    #[test]
    fn mismatched_weight_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("k");
        r.weights.pop();
        assert!(matches!(save_policy(dir.path(), &r, false), Err(Error::Policy(_))));
    }

    #[test]
    fn missing_key_names_nearest() {
        let dir = tempfile::tempdir().unwrap();
        for k in ["a/seed1", "a/seed2", "a/seed3", "zzzzzzzz"] {
            save_policy(dir.path(), &record(k), false).unwrap();
        }
        let msg = load_policy(dir.path(), "a/seed4", &expected()).unwrap_err().to_string();
        assert!(msg.contains("a/seed1") && msg.contains("a/seed2") && msg.contains("a/seed3"));
        assert!(!msg.contains("zzzzzzzz"));
    }

    #[test]
    fn hash_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        save_policy(dir.path(), &record("k"), false).unwrap();
        let mut exp = expected();
        exp.action_space_hash = "other".into();
        let msg = load_policy(dir.path(), "k", &exp).unwrap_err().to_string();
        assert!(msg.contains("hash mismatch"));
    }

    #[test]
    fn version_mismatch_refused() {
        let text = encode_policy(&record("k")).unwrap().replace("format_version = 1", "format_version = 9");
        assert!(decode_policy(&text).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn resolve_exact_only() {
        let dir = tempfile::tempdir().unwrap();
        let e = resolve_context(dir.path(), "k").unwrap_err().to_string();
        assert!(e.contains("[]"));
        save_policy(dir.path(), &record("k"), false).unwrap();
        assert_eq!(resolve_context(dir.path(), "k").unwrap(), "k");
        assert!(resolve_context(dir.path(), "k2").is_err());
        assert!(resolve_context(dir.path(), "../k").is_err());
    }

    #[test]
    fn loaded_role_is_expert() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("k");
        r.role = Role::Learner;
        save_policy(dir.path(), &r, false).unwrap();
        assert_eq!(load_policy(dir.path(), "k", &expected()).unwrap().role, Role::Expert);
    }
}
