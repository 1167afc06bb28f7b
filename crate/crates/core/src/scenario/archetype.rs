//! Canned scenarios for the four qualitative failure cases and the density
//! sweep.

use std::fmt;
use std::str::FromStr;

use crate::types::{FrameIndex, DEFAULT_BANK_CAPACITY};

use super::{DistractorMotion, DistractorSpec, Event, EventKind, ScenarioConfig, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Archetype {
    Occlusion,
    Reentry,
    DistractorParallel,
    DistractorCrossing,
    RapidMotion,
    Density(usize),
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Archetype::Occlusion => f.write_str("occlusion"),
            Archetype::Reentry => f.write_str("reentry"),
            Archetype::DistractorParallel => f.write_str("distractor_parallel"),
            Archetype::DistractorCrossing => f.write_str("distractor_crossing"),
            Archetype::RapidMotion => f.write_str("rapid_motion"),
            Archetype::Density(n) => write!(f, "density({n})"),
        }
    }
}

impl FromStr for Archetype {
    type Err = ScenarioError;

    /// Accepts the display names; density also as `density:N` or `densityN`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ScenarioError::UnknownArchetype(s.to_string());
        let name = s.trim();
        Ok(match name {
            "occlusion" => Archetype::Occlusion,
            "reentry" => Archetype::Reentry,
            "distractor_parallel" => Archetype::DistractorParallel,
            "distractor_crossing" => Archetype::DistractorCrossing,
            "rapid_motion" => Archetype::RapidMotion,
            _ => {
                let rest = name.strip_prefix("density").ok_or_else(unknown)?;
                let digits = rest
                    .strip_prefix('(')
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| rest.strip_prefix(':'))
                    .unwrap_or(rest);
                let n: usize = digits.trim().parse().map_err(|_| unknown())?;
                if n == 0 {
                    return Err(unknown());
                }
                Archetype::Density(n)
            }
        })
    }
}

const FRAMES: FrameIndex = 50;
const EVENT_START: FrameIndex = 10;

/// Canonical config for `name` with the default bank capacity.
pub fn archetype(name: &str, seed: u64) -> Result<ScenarioConfig, ScenarioError> {
    archetype_with_capacity(name, seed, DEFAULT_BANK_CAPACITY)
}

/// Canonical config for `name`; absence windows last `2 * capacity` frames,
/// long enough for a FIFO bank to turn over completely.
pub fn archetype_with_capacity(
    name: &str,
    seed: u64,
    capacity: usize,
) -> Result<ScenarioConfig, ScenarioError> {
    let kind: Archetype = name.parse()?;
    let absence = 2 * capacity as FrameIndex;
    let event = |kind, target, start: FrameIndex, len: FrameIndex, severity| Event {
        kind,
        target,
        start,
        end: start + len,
        severity,
    };
    let distractor = |motion| DistractorSpec {
        target: 0,
        similarity: 0.9,
        motion,
        crowding: 0.8,
    };

    let config = match kind {
        Archetype::Reentry => {
            let mut c = ScenarioConfig::basic(3, EVENT_START + absence + 26, seed);
            c.events
                .push(event(EventKind::ExitReentry, 0, EVENT_START, absence, 1.0));
            c
        }
        Archetype::Occlusion => {
            let mut c = ScenarioConfig::basic(3, FRAMES.max(EVENT_START + absence + 10), seed);
            c.events
                .push(event(EventKind::Occlusion, 0, EVENT_START, absence, 0.8));
            c
        }
        Archetype::DistractorParallel => {
            let mut c = ScenarioConfig::basic(3, FRAMES, seed);
            c.distractors.push(distractor(DistractorMotion::Parallel));
            c
        }
        Archetype::DistractorCrossing => {
            let mut c = ScenarioConfig::basic(3, FRAMES, seed);
            c.distractors.push(distractor(DistractorMotion::Crossing));
            c
        }
        Archetype::RapidMotion => {
            let mut c = ScenarioConfig::basic(3, FRAMES, seed);
            c.events.push(event(EventKind::RapidMotion, 0, 15, 10, 1.0));
            c
        }
        Archetype::Density(n) => {
            // One exit/re-entry for every third target, staggered by 3 frames.
            let exits = n.div_ceil(3);
            let stagger: FrameIndex = 3;
            let last_end = EVENT_START + stagger * (exits as FrameIndex - 1) + absence;
            let mut c = ScenarioConfig::basic(n, last_end + 26, seed);
            for k in 0..exits {
                c.events.push(event(
                    EventKind::ExitReentry,
                    3 * k,
                    EVENT_START + stagger * k as FrameIndex,
                    absence,
                    1.0,
                ));
            }
            c
        }
    };
    config.validate()?;
    Ok(config)
}
