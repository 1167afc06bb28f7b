//! Per-frame inference loop.
//!
//! [`Tracker::step`] runs a fixed sequence for every frame:
//!
//! 1. validate the frame (slot uniqueness, strictly increasing index);
//! 2. associate visible observations to active tracks;
//! 3. re-identify unmatched observations against inactive tracks, then
//!    initialize one new group from whatever is still unmatched;
//! 4. encode a feature for every pre-existing track, synthesizing a blank
//!    observation (`v = 0`) for tracks that received none;
//! 5. run the selection policy once per group;
//! 6. apply the bank updates and emit a [`FrameResult`].
//!
//! Tracks, groups and outputs are always visited in ascending id order and
//! every track draws encoder noise from its own stream, so a run is a pure
//! function of its configuration and input frames.

mod association;
mod encoder;

pub use association::{
    associate, motion_gate_passes, readout, reidentify, Association, Reidentification,
};
pub use encoder::{encode_feature, random_unit, track_noise_rng};

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{apply_updates, decide, PolicyConfig, PolicyError};
use crate::record::{RunManifest, RunRecord};
use crate::types::{
    CoreError, FeatureVec, FrameIndex, FrameInput, Group, MaskGeom, MemoryBank, Observation, Score,
    SelectionDecision, Slot, Track, TrackId, DEFAULT_BANK_CAPACITY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("invalid frame: {0}")]
    Frame(#[from] CoreError),
    #[error("frame index {got} does not follow {previous}")]
    NonMonotonicFrameIndex {
        previous: FrameIndex,
        got: FrameIndex,
    },
    #[error("slot {0} was not part of the initial target set")]
    NewSlotInPvs(Slot),
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// PVS tracks a fixed prompted target set; PCS admits new objects mid-video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackingMode {
    Pvs,
    Pcs,
}

impl std::str::FromStr for TrackingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pvs" => Ok(TrackingMode::Pvs),
            "pcs" => Ok(TrackingMode::Pcs),
            other => Err(format!("unknown mode `{other}` (expected pvs or pcs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub policy: PolicyConfig,
    pub reid_threshold: f64,
    pub assoc_threshold: f64,
    /// In multiples of the summed radii.
    pub motion_gate: f64,
    pub mode: TrackingMode,
    pub encoder_noise_seed: u64,
    pub bank_capacity: usize,
    pub pointer_dim: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            policy: PolicyConfig::default(),
            reid_threshold: 0.6,
            assoc_threshold: 0.5,
            motion_gate: 2.0,
            mode: TrackingMode::Pcs,
            encoder_noise_seed: 0,
            bank_capacity: DEFAULT_BANK_CAPACITY,
            pointer_dim: 4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(TrackerError::InvalidConfig(format!(
                    "{name} = {v} must lie in (0, 1)"
                )))
            }
        };
        open_unit("tau", self.policy.tau)?;
        open_unit("reid_threshold", self.reid_threshold)?;
        open_unit("assoc_threshold", self.assoc_threshold)?;
        if !(self.motion_gate > 0.0 && self.motion_gate.is_finite()) {
            return Err(TrackerError::InvalidConfig(format!(
                "motion_gate = {} must be positive",
                self.motion_gate
            )));
        }
        if self.bank_capacity < 2 {
            return Err(TrackerError::InvalidConfig(format!(
                "bank_capacity = {} must be at least 2",
                self.bank_capacity
            )));
        }
        if self.pointer_dim == 0 {
            return Err(TrackerError::InvalidConfig(
                "pointer_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOutput {
    pub track_id: TrackId,
    pub slot: Slot,
    pub mask: MaskGeom,
    pub q: Score,
    /// `None` for tracks created in this frame: their conditioning entry is
    /// written unconditionally and they join selection from the next frame.
    pub decision: Option<SelectionDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameResult {
    pub t: FrameIndex,
    pub outputs: Vec<TrackOutput>,
    pub new_track_ids: Vec<TrackId>,
    pub presence: Score,
}

impl FrameResult {
    pub fn output(&self, track_id: TrackId) -> Option<&TrackOutput> {
        self.outputs.iter().find(|o| o.track_id == track_id)
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    groups: Vec<Group>,
    group_of: Vec<usize>,
    rngs: Vec<ChaCha8Rng>,
    tracks_per_slot: BTreeMap<Slot, u32>,
    initial_slots: Option<BTreeSet<Slot>>,
    last_t: Option<FrameIndex>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Tracker {
            config,
            tracks: Vec::new(),
            groups: Vec::new(),
            group_of: Vec::new(),
            rngs: Vec::new(),
            tracks_per_slot: BTreeMap::new(),
            initial_slots: None,
            last_t: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// All tracks ever created, indexed by track id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.tracks.get(id as usize)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Creates one track per observation, each seeded with a conditioning
    /// entry, and one group holding all of them.
    ///
    /// In PVS mode the first call fixes the target set; later calls may only
    /// re-spawn tracks on slots from that set.
    pub fn init_group(
        &mut self,
        t: FrameIndex,
        observations: &[&Observation],
    ) -> Result<(usize, Vec<TrackId>), TrackerError> {
        if self.config.mode == TrackingMode::Pvs {
            match &self.initial_slots {
                None => {
                    self.initial_slots = Some(observations.iter().map(|o| o.slot).collect());
                }
                Some(allowed) => {
                    if let Some(o) = observations.iter().find(|o| !allowed.contains(&o.slot)) {
                        return Err(TrackerError::NewSlotInPvs(o.slot));
                    }
                }
            }
        }
        let group_index = self.groups.len();
        let mut ids = Vec::with_capacity(observations.len());
        for obs in observations {
            let id = self.tracks.len() as TrackId;
            let ordinal = self.tracks_per_slot.entry(obs.slot).or_insert(0);
            let mut rng = track_noise_rng(self.config.encoder_noise_seed, obs.slot, *ordinal);
            *ordinal += 1;
            let (feature, pointer) = encode_feature(obs, self.config.pointer_dim, &mut rng);
            let bank = MemoryBank::new(self.config.bank_capacity, t, feature, pointer)?;
            self.tracks
                .push(Track::new(id, obs.slot, bank, t, obs.mask));
            self.group_of.push(group_index);
            self.rngs.push(rng);
            ids.push(id);
        }
        if !ids.is_empty() {
            self.groups.push(Group::new(t, ids.clone())?);
        }
        Ok((group_index, ids))
    }

    pub fn step(&mut self, frame: &FrameInput) -> Result<FrameResult, TrackerError> {
        frame.check()?;
        if let Some(previous) = self.last_t {
            if frame.t <= previous {
                return Err(TrackerError::NonMonotonicFrameIndex {
                    previous,
                    got: frame.t,
                });
            }
        }
        let t = frame.t;
        let first_frame = self.last_t.is_none();
        self.last_t = Some(t);
        let by_slot: BTreeMap<Slot, &Observation> =
            frame.observations.iter().map(|o| (o.slot, o)).collect();

        // PVS: the first frame's observations define the target set.
        if first_frame && self.config.mode == TrackingMode::Pvs {
            let all: Vec<&Observation> = by_slot.values().copied().collect();
            let (_, ids) = self.init_group(t, &all)?;
            let outputs = ids
                .iter()
                .map(|&id| {
                    let tr = &self.tracks[id as usize];
                    let obs = by_slot[&tr.slot];
                    TrackOutput {
                        track_id: id,
                        slot: tr.slot,
                        mask: obs.mask,
                        q: obs.q,
                        decision: None,
                    }
                })
                .collect();
            return Ok(FrameResult {
                t,
                outputs,
                new_track_ids: ids,
                presence: frame.presence,
            });
        }

        let existing = self.tracks.len();
        let assoc = associate(&frame.observations, &self.tracks, &self.config);
        let mut matched: BTreeMap<TrackId, Slot> = assoc
            .matched
            .iter()
            .map(|(&slot, &id)| (id, slot))
            .collect();
        for &id in &assoc.unobserved_tracks {
            self.tracks[id as usize].active = false;
        }

        let mut spawn: Vec<&Observation> = Vec::new();
        for &slot in &assoc.unmatched_observations {
            let obs = by_slot[&slot];
            let candidates = self.tracks.iter().filter(|tr| {
                !tr.active
                    && !matched.contains_key(&tr.track_id())
                    && (self.config.mode == TrackingMode::Pcs || tr.slot == slot)
            });
            match reidentify(obs, candidates, self.config.reid_threshold) {
                Reidentification::Existing(id) => {
                    debug!("t={t}: slot {slot} re-identified as track {id}");
                    matched.insert(id, slot);
                }
                Reidentification::NewTrack => spawn.push(obs),
            }
        }

        let claimed: BTreeSet<Slot> = matched
            .values()
            .copied()
            .chain(spawn.iter().map(|o| o.slot))
            .collect();

        // Inputs for every pre-existing track: its matched observation, or a
        // blank one carrying the perceived q of its (unclaimed) slot.
        let mut inputs: Vec<(Observation, bool)> = Vec::with_capacity(existing);
        for tr in &self.tracks[..existing] {
            let input = match matched.get(&tr.track_id()) {
                Some(slot) => (by_slot[slot].clone(), true),
                None => {
                    let q = by_slot
                        .get(&tr.slot)
                        .filter(|o| !claimed.contains(&o.slot))
                        .map(|o| o.q)
                        .unwrap_or(Score::ZERO);
                    let blank = Observation {
                        slot: tr.slot,
                        mask: tr.last_mask.with_visibility(0.0)?,
                        embedding: tr.bank.conditioning().feature.clone(),
                        q,
                    };
                    (blank, false)
                }
            };
            inputs.push(input);
        }

        let features: Vec<(FeatureVec, FeatureVec)> = inputs
            .iter()
            .zip(self.rngs.iter_mut())
            .map(|((obs, _), rng)| encode_feature(obs, self.config.pointer_dim, rng))
            .collect();

        let mut decisions: Vec<Option<SelectionDecision>> = vec![None; existing];
        for group in &self.groups {
            let members: Vec<(TrackId, Score)> = group
                .members()
                .iter()
                .map(|&id| (id, inputs[id as usize].0.q))
                .collect();
            for d in decide(&self.config.policy, &members, frame.presence)? {
                decisions[d.track_id as usize] = Some(d);
            }
        }
        let decisions: Vec<SelectionDecision> = decisions
            .into_iter()
            .map(|d| d.expect("every pre-existing track belongs to a group"))
            .collect();
        apply_updates(&mut self.tracks[..existing], t, &features, &decisions)?;

        for (tr, (obs, seen)) in self.tracks[..existing].iter_mut().zip(&inputs) {
            if *seen {
                tr.active = true;
                tr.last_seen = t;
                tr.last_mask = obs.mask;
                tr.slot = obs.slot;
            } else {
                tr.active = false;
            }
        }

        let (_, new_ids) = self.init_group(t, &spawn)?;
        if !new_ids.is_empty() {
            debug!("t={t}: new tracks {new_ids:?}");
        }

        let mut outputs: Vec<TrackOutput> = inputs
            .iter()
            .zip(&decisions)
            .enumerate()
            .map(|(id, ((obs, _), d))| TrackOutput {
                track_id: id as TrackId,
                slot: obs.slot,
                mask: obs.mask,
                q: obs.q,
                decision: Some(*d),
            })
            .collect();
        for &id in &new_ids {
            let tr = &self.tracks[id as usize];
            let obs = by_slot[&tr.slot];
            outputs.push(TrackOutput {
                track_id: id,
                slot: tr.slot,
                mask: obs.mask,
                q: obs.q,
                decision: None,
            });
        }

        Ok(FrameResult {
            t,
            outputs,
            new_track_ids: new_ids,
            presence: frame.presence,
        })
    }
}

/// Folds [`Tracker::step`] over `frames`.
pub fn run<I>(
    frames: I,
    config: TrackerConfig,
    manifest: RunManifest,
) -> Result<RunRecord, TrackerError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<FrameInput>,
{
    let (record, _) = run_with_state(frames, config, manifest)?;
    Ok(record)
}

/// Like [`run`], also returning the final tracker state.
pub fn run_with_state<I>(
    frames: I,
    config: TrackerConfig,
    manifest: RunManifest,
) -> Result<(RunRecord, Tracker), TrackerError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<FrameInput>,
{
    use std::borrow::Borrow;
    let mut tracker = Tracker::new(config)?;
    let mut results = Vec::new();
    for frame in frames {
        results.push(tracker.step(frame.borrow())?);
    }
    Ok((
        RunRecord {
            manifest,
            frames: results,
        },
        tracker,
    ))
}
