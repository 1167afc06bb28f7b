//! Experiment configuration files (TOML).
//!
//! ```toml
//! targets = 3
//! frames = 50
//! seed = 1
//! # archetype = "reentry"     # start from a canned scenario instead
//! # world_width = 100.0
//! # world_height = 100.0
//! # dim = 64
//! # presence = "max"         # or "mean"
//!
//! [noise]                    # sigma_q, sigma_p, sigma_pos
//! [[events]]                 # kind, target, start, end, severity
//! [[distractors]]            # target, similarity, motion, crowding
//! [tracker]                  # policy, tau, capacity, reid_threshold,
//!                            # assoc_threshold, motion_gate, mode,
//!                            # pointer_dim, noise_seed
//! ```
//!
//! With `archetype` set, `targets`/`frames` must be omitted; the other keys
//! override the archetype's values and `events`/`distractors`, when given,
//! replace its lists.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::policy::{PolicyConfig, PolicyKind};
use crate::scenario::{
    archetype_with_capacity, DistractorSpec, Event, NoiseModel, PresenceRule, ScenarioConfig,
    ScenarioError,
};
use crate::tracker::{TrackerConfig, TrackingMode};
use crate::types::FrameIndex;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}{}: {message}", key.as_ref().map(|k| format!(", key `{k}`")).unwrap_or_default())]
    ParseError {
        line: usize,
        key: Option<String>,
        message: String,
    },
    #[error("`{key}` out of range: {message}")]
    RangeViolation { key: String, message: String },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    archetype: Option<String>,
    targets: Option<usize>,
    frames: Option<FrameIndex>,
    seed: Option<u64>,
    world_width: Option<f64>,
    world_height: Option<f64>,
    dim: Option<usize>,
    presence: Option<PresenceRule>,
    noise: Option<NoiseFile>,
    events: Option<Vec<Event>>,
    distractors: Option<Vec<DistractorSpec>>,
    #[serde(default)]
    tracker: TrackerFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    sigma_q: Option<f64>,
    sigma_p: Option<f64>,
    sigma_pos: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackerFile {
    policy: Option<PolicyKind>,
    tau: Option<f64>,
    capacity: Option<usize>,
    reid_threshold: Option<f64>,
    assoc_threshold: Option<f64>,
    motion_gate: Option<f64>,
    mode: Option<TrackingMode>,
    pointer_dim: Option<usize>,
    noise_seed: Option<u64>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub tracker: TrackerConfig,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        canonical::digest(self).expect("configs always serialize")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    parse_config_str(&fs::read_to_string(path)?)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line - 1)?;
    let (key, _) = l.split_once('=')?;
    let key = key.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

fn decode_error(text: &str, e: toml::de::Error) -> ConfigError {
    let line = e.span().map_or(1, |s| line_of(text, s.start));
    let message = e.message().trim().to_string();
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some((key, _)) = rest.split_once('`') {
            return ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            };
        }
    }
    ConfigError::ParseError {
        line,
        key: key_on_line(text, line),
        message,
    }
}

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::RangeViolation {
        key: key.to_string(),
        message: message.into(),
    }
}

fn unit_open(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(range(key, format!("{v} must lie in (0, 1)")))
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| decode_error(text, e))?;
    let t = &file.tracker;

    let mut tracker = TrackerConfig::default();
    let tau = unit_open("tau", t.tau.unwrap_or(tracker.policy.tau))?;
    let kind = t.policy.unwrap_or(tracker.policy.kind);
    tracker.policy = PolicyConfig::new(tau, kind).map_err(|e| range("tau", e.to_string()))?;
    if let Some(v) = t.reid_threshold {
        tracker.reid_threshold = unit_open("reid_threshold", v)?;
    }
    if let Some(v) = t.assoc_threshold {
        tracker.assoc_threshold = unit_open("assoc_threshold", v)?;
    }
    if let Some(v) = t.motion_gate {
        if !(v > 0.0 && v.is_finite()) {
            return Err(range("motion_gate", format!("{v} must be positive")));
        }
        tracker.motion_gate = v;
    }
    if let Some(v) = t.capacity {
        if v < 2 {
            return Err(range("capacity", format!("{v} must be at least 2")));
        }
        tracker.bank_capacity = v;
    }
    if let Some(v) = t.pointer_dim {
        if v == 0 {
            return Err(range("pointer_dim", "must be positive"));
        }
        tracker.pointer_dim = v;
    }
    if let Some(v) = t.mode {
        tracker.mode = v;
    }
    if let Some(v) = t.noise_seed {
        tracker.encoder_noise_seed = v;
    }

    let seed = file.seed.unwrap_or(0);
    let mut scenario = match &file.archetype {
        Some(name) => {
            for (key, present) in [
                ("targets", file.targets.is_some()),
                ("frames", file.frames.is_some()),
            ] {
                if present {
                    return Err(range(key, "cannot be combined with `archetype`"));
                }
            }
            archetype_with_capacity(name, seed, tracker.bank_capacity)
                .map_err(|e| range("archetype", e.to_string()))?
        }
        None => {
            let targets = file.targets.ok_or_else(|| range("targets", "required"))?;
            let frames = file.frames.ok_or_else(|| range("frames", "required"))?;
            if targets == 0 {
                return Err(range("targets", "must be at least 1"));
            }
            if frames == 0 {
                return Err(range("frames", "must be at least 1"));
            }
            ScenarioConfig::basic(targets, frames, seed)
        }
    };
    if let Some(v) = file.world_width {
        scenario.world_width = v;
    }
    if let Some(v) = file.world_height {
        scenario.world_height = v;
    }
    if let Some(v) = file.dim {
        scenario.embedding_dim = v;
    }
    if let Some(v) = file.presence {
        scenario.presence = v;
    }
    if let Some(n) = &file.noise {
        let d = NoiseModel::default();
        scenario.noise = NoiseModel {
            sigma_q: n.sigma_q.unwrap_or(d.sigma_q),
            sigma_p: n.sigma_p.unwrap_or(d.sigma_p),
            sigma_pos: n.sigma_pos.unwrap_or(d.sigma_pos),
        };
    }
    if let Some(v) = file.events {
        scenario.events = v;
    }
    if let Some(v) = file.distractors {
        scenario.distractors = v;
    }
    if scenario.embedding_dim < tracker.pointer_dim {
        return Err(range("dim", "must be at least pointer_dim"));
    }
    scenario.validate().map_err(|e| {
        let key = match &e {
            ScenarioError::InvalidWindow { .. } => "events",
            ScenarioError::InvalidConfig(m) if m.starts_with("event") => "events",
            ScenarioError::InvalidConfig(m) if m.starts_with("distractor") => "distractors",
            ScenarioError::InvalidConfig(m) if m.starts_with("world") => "world_width",
            ScenarioError::InvalidConfig(m) if m.starts_with("embedding") => "dim",
            ScenarioError::InvalidConfig(m) if m.starts_with("sigma") => "noise",
            _ => "scenario",
        };
        range(key, e.to_string())
    })?;
    tracker
        .validate()
        .map_err(|e| range("tracker", e.to_string()))?;
    Ok(ExperimentConfig { scenario, tracker })
}
