//! Value types shared by the tracker, the scenario simulator and the metrics.
//!
//! Every type validates its invariants on construction (and on
//! deserialization), so a value that exists is a value that is valid.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame index within a run.
pub type FrameIndex = u64;
/// Stable track identifier; never reused within a run.
pub type TrackId = u64;
/// Perception slot (query) identifier.
pub type Slot = u32;

/// Tolerance on the L2 norm of a unit feature vector.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("duplicate observation slot {0}")]
    DuplicateSlot(Slot),
    #[error("{field} = {value} is outside [0, 1]{}", slot_suffix(*.slot))]
    ScoreOutOfRange {
        slot: Option<Slot>,
        field: &'static str,
        value: f64,
    },
    #[error("embedding has norm {norm}, expected 1{}", slot_suffix(*.slot))]
    NonUnitEmbedding { slot: Option<Slot>, norm: f64 },
    #[error("cannot normalize a zero or non-finite vector")]
    DegenerateVector,
    #[error("vector must have at least one component")]
    EmptyVector,
    #[error("invalid mask: {0}")]
    InvalidMask(&'static str),
    #[error("memory bank capacity must be at least 2, got {0}")]
    CapacityTooSmall(usize),
    #[error("invalid memory bank: {0}")]
    InvalidBank(&'static str),
    #[error("group must have at least one member")]
    EmptyGroup,
}

fn slot_suffix(slot: Option<Slot>) -> String {
    slot.map(|s| format!(" (slot {s})")).unwrap_or_default()
}

/// A confidence value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    pub fn new(value: f64) -> Result<Self, CoreError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Score(value))
        } else {
            Err(CoreError::ScoreOutOfRange {
                slot: None,
                field: "score",
                value,
            })
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Score(0.0)
        } else {
            Score(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = CoreError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for f64 {
    fn from(score: Score) -> f64 {
        score.0
    }
}

/// A unit-norm real vector (appearance feature, memory feature or object pointer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    /// Scales `components` to unit length.
    pub fn normalized(components: Vec<f64>) -> Result<Self, CoreError> {
        if components.is_empty() {
            return Err(CoreError::EmptyVector);
        }
        let norm = l2_norm(&components);
        if !norm.is_finite() || norm == 0.0 {
            return Err(CoreError::DegenerateVector);
        }
        Ok(FeatureVec(
            components.into_iter().map(|c| c / norm).collect(),
        ))
    }

    /// Accepts `components` as-is when already unit length (within
    /// [`UNIT_NORM_TOLERANCE`]); the components are not rescaled.
    pub fn from_unit(components: Vec<f64>) -> Result<Self, CoreError> {
        if components.is_empty() {
            return Err(CoreError::EmptyVector);
        }
        let norm = l2_norm(&components);
        if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            Ok(FeatureVec(components))
        } else {
            Err(CoreError::NonUnitEmbedding { slot: None, norm })
        }
    }

    /// The `axis`-th standard basis vector of dimension `dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut c = vec![0.0; dim];
        c[axis] = 1.0;
        FeatureVec(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Dot product; both vectors are unit length so this is the cosine.
    /// Summation runs in index order.
    pub fn cosine(&self, other: &FeatureVec) -> f64 {
        assert_eq!(self.dim(), other.dim(), "feature dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for FeatureVec {
    type Error = CoreError;

    fn try_from(components: Vec<f64>) -> Result<Self, Self::Error> {
        FeatureVec::from_unit(components)
    }
}

impl From<FeatureVec> for Vec<f64> {
    fn from(v: FeatureVec) -> Vec<f64> {
        v.0
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Analytic disc mask. `visible_fraction == 0` is a blank mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMask", into = "RawMask")]
pub struct MaskGeom {
    center_x: f64,
    center_y: f64,
    radius: f64,
    visible_fraction: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMask {
    center_x: f64,
    center_y: f64,
    radius: f64,
    visible_fraction: f64,
}

impl MaskGeom {
    pub fn new(
        center_x: f64,
        center_y: f64,
        radius: f64,
        visible_fraction: f64,
    ) -> Result<Self, CoreError> {
        if !(center_x.is_finite() && center_y.is_finite()) {
            return Err(CoreError::InvalidMask("center must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CoreError::InvalidMask("radius must be positive"));
        }
        if !(0.0..=1.0).contains(&visible_fraction) {
            return Err(CoreError::InvalidMask(
                "visible_fraction must lie in [0, 1]",
            ));
        }
        Ok(MaskGeom {
            center_x,
            center_y,
            radius,
            visible_fraction,
        })
    }

    pub fn center_x(&self) -> f64 {
        self.center_x
    }

    pub fn center_y(&self) -> f64 {
        self.center_y
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn visible_fraction(&self) -> f64 {
        self.visible_fraction
    }

    pub fn is_blank(&self) -> bool {
        self.visible_fraction == 0.0
    }

    /// Same disc with a different visible fraction.
    pub fn with_visibility(&self, visible_fraction: f64) -> Result<Self, CoreError> {
        MaskGeom::new(self.center_x, self.center_y, self.radius, visible_fraction)
    }

    pub fn center_distance(&self, other: &MaskGeom) -> f64 {
        let dx = self.center_x - other.center_x;
        let dy = self.center_y - other.center_y;
        (dx * dx + dy * dy).sqrt()
    }
}

impl TryFrom<RawMask> for MaskGeom {
    type Error = CoreError;

    fn try_from(r: RawMask) -> Result<Self, Self::Error> {
        MaskGeom::new(r.center_x, r.center_y, r.radius, r.visible_fraction)
    }
}

impl From<MaskGeom> for RawMask {
    fn from(m: MaskGeom) -> Self {
        RawMask {
            center_x: m.center_x,
            center_y: m.center_y,
            radius: m.radius,
            visible_fraction: m.visible_fraction,
        }
    }
}

/// One perceived object in one frame: predicted mask, appearance embedding
/// and segmentation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub slot: Slot,
    pub mask: MaskGeom,
    pub embedding: FeatureVec,
    pub q: Score,
}

impl Observation {
    pub fn is_blank(&self) -> bool {
        self.mask.is_blank()
    }
}

/// One simulated frame as seen by the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInput {
    pub t: FrameIndex,
    pub presence: Score,
    pub observations: Vec<Observation>,
}

impl FrameInput {
    /// Checks slot uniqueness, the only invariant the field types cannot carry.
    pub fn check(&self) -> Result<(), CoreError> {
        let mut seen = BTreeSet::new();
        for obs in &self.observations {
            if !seen.insert(obs.slot) {
                return Err(CoreError::DuplicateSlot(obs.slot));
            }
        }
        Ok(())
    }

    pub fn observation(&self, slot: Slot) -> Option<&Observation> {
        self.observations.iter().find(|o| o.slot == slot)
    }
}

/// Unvalidated observation, e.g. freshly read from an external source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub slot: Slot,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub visible_fraction: f64,
    pub embedding: Vec<f64>,
    pub q: f64,
}

/// Unvalidated frame; turned into a [`FrameInput`] by [`validate_frame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub t: FrameIndex,
    pub presence: f64,
    pub observations: Vec<RawObservation>,
}

impl From<&FrameInput> for RawFrame {
    fn from(f: &FrameInput) -> Self {
        RawFrame {
            t: f.t,
            presence: f.presence.value(),
            observations: f
                .observations
                .iter()
                .map(|o| RawObservation {
                    slot: o.slot,
                    center_x: o.mask.center_x(),
                    center_y: o.mask.center_y(),
                    radius: o.mask.radius(),
                    visible_fraction: o.mask.visible_fraction(),
                    embedding: o.embedding.components().to_vec(),
                    q: o.q.value(),
                })
                .collect(),
        }
    }
}

/// Checks every frame-level invariant and returns the typed frame. The
/// values are carried over unchanged; errors name the offending slot.
pub fn validate_frame(input: RawFrame) -> Result<FrameInput, CoreError> {
    let presence = Score::new(input.presence).map_err(|_| CoreError::ScoreOutOfRange {
        slot: None,
        field: "presence",
        value: input.presence,
    })?;
    let mut seen = BTreeSet::new();
    let mut observations = Vec::with_capacity(input.observations.len());
    for raw in input.observations {
        let slot = raw.slot;
        if !seen.insert(slot) {
            return Err(CoreError::DuplicateSlot(slot));
        }
        let q = Score::new(raw.q).map_err(|_| CoreError::ScoreOutOfRange {
            slot: Some(slot),
            field: "q",
            value: raw.q,
        })?;
        if !(0.0..=1.0).contains(&raw.visible_fraction) {
            return Err(CoreError::ScoreOutOfRange {
                slot: Some(slot),
                field: "visible_fraction",
                value: raw.visible_fraction,
            });
        }
        let mask = MaskGeom::new(raw.center_x, raw.center_y, raw.radius, raw.visible_fraction)?;
        let embedding = FeatureVec::from_unit(raw.embedding).map_err(|e| match e {
            CoreError::NonUnitEmbedding { norm, .. } => CoreError::NonUnitEmbedding {
                slot: Some(slot),
                norm,
            },
            CoreError::EmptyVector => CoreError::NonUnitEmbedding {
                slot: Some(slot),
                norm: 0.0,
            },
            other => other,
        })?;
        observations.push(Observation {
            slot,
            mask,
            embedding,
            q,
        });
    }
    Ok(FrameInput {
        t: input.t,
        presence,
        observations,
    })
}

/// A stored (feature, pointer) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryEntry {
    pub t: FrameIndex,
    pub feature: FeatureVec,
    pub pointer: FeatureVec,
    pub conditioning: bool,
}

/// Bounded per-track memory: one pinned conditioning entry followed by a
/// FIFO window of at most `capacity - 1` recent entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBank", into = "RawBank")]
pub struct MemoryBank {
    capacity: usize,
    entries: Vec<MemoryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBank {
    capacity: usize,
    entries: Vec<MemoryEntry>,
}

pub const DEFAULT_BANK_CAPACITY: usize = 7;

impl MemoryBank {
    /// Creates a bank holding only the conditioning entry built from
    /// `(t, feature, pointer)`.
    pub fn new(
        capacity: usize,
        t: FrameIndex,
        feature: FeatureVec,
        pointer: FeatureVec,
    ) -> Result<Self, CoreError> {
        if capacity < 2 {
            return Err(CoreError::CapacityTooSmall(capacity));
        }
        Ok(MemoryBank {
            capacity,
            entries: vec![MemoryEntry {
                t,
                feature,
                pointer,
                conditioning: true,
            }],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false: the conditioning entry is permanent.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn conditioning(&self) -> &MemoryEntry {
        &self.entries[0]
    }

    /// Non-conditioning entries, oldest first.
    pub fn window(&self) -> &[MemoryEntry] {
        &self.entries[1..]
    }

    /// Appends a non-conditioning entry, evicting the oldest
    /// non-conditioning entry first when the bank is full.
    pub fn push(&mut self, t: FrameIndex, feature: FeatureVec, pointer: FeatureVec) {
        if self.entries.len() == self.capacity {
            self.entries.remove(1);
        }
        self.entries.push(MemoryEntry {
            t,
            feature,
            pointer,
            conditioning: false,
        });
    }

    fn check(&self) -> Result<(), CoreError> {
        if self.capacity < 2 {
            return Err(CoreError::CapacityTooSmall(self.capacity));
        }
        if self.entries.is_empty() || self.entries.len() > self.capacity {
            return Err(CoreError::InvalidBank("entry count outside [1, capacity]"));
        }
        let first = &self.entries[0];
        if !first.conditioning || self.entries[1..].iter().any(|e| e.conditioning) {
            return Err(CoreError::InvalidBank(
                "exactly one conditioning entry, stored first",
            ));
        }
        if self.entries[1..].iter().any(|e| e.t < first.t) {
            return Err(CoreError::InvalidBank(
                "conditioning entry must be the oldest",
            ));
        }
        Ok(())
    }
}

impl TryFrom<RawBank> for MemoryBank {
    type Error = CoreError;

    fn try_from(raw: RawBank) -> Result<Self, Self::Error> {
        let bank = MemoryBank {
            capacity: raw.capacity,
            entries: raw.entries,
        };
        bank.check()?;
        Ok(bank)
    }
}

impl From<MemoryBank> for RawBank {
    fn from(b: MemoryBank) -> Self {
        RawBank {
            capacity: b.capacity,
            entries: b.entries,
        }
    }
}

/// Outcome of memory selection for one track in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionDecision {
    pub track_id: TrackId,
    pub score_s: f64,
    pub saved: bool,
}

impl SelectionDecision {
    /// Saves iff `score_s > tau`.
    pub fn thresholded(track_id: TrackId, score_s: f64, tau: f64) -> Self {
        SelectionDecision {
            track_id,
            score_s,
            saved: score_s > tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    track_id: TrackId,
    pub slot: Slot,
    pub bank: MemoryBank,
    /// True iff a visible observation was matched at `last_seen`.
    pub active: bool,
    pub last_seen: FrameIndex,
    /// Mask from the most recent visible match; drives the motion gate.
    pub last_mask: MaskGeom,
    pub created_at: FrameIndex,
}

impl Track {
    pub fn new(
        track_id: TrackId,
        slot: Slot,
        bank: MemoryBank,
        t: FrameIndex,
        mask: MaskGeom,
    ) -> Self {
        Track {
            track_id,
            slot,
            bank,
            active: true,
            last_seen: t,
            last_mask: mask,
            created_at: t,
        }
    }

    pub fn track_id(&self) -> TrackId {
        self.track_id
    }
}

/// Tracks initialized at the same frame; they share one selection decision
/// under the coupled policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub created_at: FrameIndex,
    members: Vec<TrackId>,
}

impl Group {
    pub fn new(created_at: FrameIndex, members: Vec<TrackId>) -> Result<Self, CoreError> {
        if members.is_empty() {
            return Err(CoreError::EmptyGroup);
        }
        Ok(Group {
            created_at,
            members,
        })
    }

    pub fn members(&self) -> &[TrackId] {
        &self.members
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_obs(slot: Slot, q: f64) -> RawObservation {
        RawObservation {
            slot,
            center_x: 10.0,
            center_y: 10.0,
            radius: 3.0,
            visible_fraction: 1.0,
            embedding: vec![1.0, 0.0, 0.0, 0.0],
            q,
        }
    }

    fn raw_frame(obs: Vec<RawObservation>) -> RawFrame {
        RawFrame {
            t: 0,
            presence: 1.0,
            observations: obs,
        }
    }

    #[test]
    fn valid_frame_passes_through_unchanged() {
        let raw = raw_frame(vec![raw_obs(0, 0.9), raw_obs(1, 0.5), raw_obs(2, 0.0)]);
        let frame = validate_frame(raw.clone()).unwrap();
        assert_eq!(RawFrame::from(&frame), raw);
    }

    #[test]
    fn duplicate_slot_is_rejected() {
        let raw = raw_frame(vec![raw_obs(0, 0.9), raw_obs(0, 0.5)]);
        assert_eq!(validate_frame(raw), Err(CoreError::DuplicateSlot(0)));
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let raw = raw_frame(vec![raw_obs(3, 1.2)]);
        match validate_frame(raw) {
            Err(CoreError::ScoreOutOfRange { slot, field, value }) => {
                assert_eq!(slot, Some(3));
                assert_eq!(field, "q");
                assert_eq!(value, 1.2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_unit_embedding_is_rejected() {
        let mut o = raw_obs(4, 0.5);
        o.embedding = vec![1.0, 1.0, 0.0, 0.0];
        match validate_frame(raw_frame(vec![o])) {
            Err(CoreError::NonUnitEmbedding { slot, .. }) => assert_eq!(slot, Some(4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn score_bounds() {
        assert!(Score::new(0.0).is_ok());
        assert!(Score::new(1.0).is_ok());
        assert!(Score::new(-1e-12).is_err());
        assert!(Score::new(f64::NAN).is_err());
        assert_eq!(Score::clamped(1.7).value(), 1.0);
        assert!(serde_json::from_str::<Score>("1.5").is_err());
    }

    #[test]
    fn normalized_vectors_are_unit() {
        let v = FeatureVec::normalized(vec![3.0, 4.0]).unwrap();
        assert!((l2_norm(v.components()) - 1.0).abs() < 1e-12);
        assert!(FeatureVec::normalized(vec![0.0, 0.0]).is_err());
        assert!(serde_json::from_str::<FeatureVec>("[1.0, 1.0]").is_err());
    }

    #[test]
    fn mask_rejects_bad_geometry() {
        assert!(MaskGeom::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(MaskGeom::new(0.0, 0.0, 1.0, 1.1).is_err());
        assert!(MaskGeom::new(0.0, 0.0, 1.0, 0.0).unwrap().is_blank());
    }

    fn entry_vec(i: usize) -> FeatureVec {
        FeatureVec::basis(8, i % 8)
    }

    #[test]
    fn bank_evicts_oldest_window_entry_and_keeps_conditioning() {
        let mut bank = MemoryBank::new(3, 0, entry_vec(0), FeatureVec::basis(2, 0)).unwrap();
        for t in 1..=5u64 {
            bank.push(t, entry_vec(t as usize), FeatureVec::basis(2, 1));
            assert!(bank.len() <= 3);
            assert!(bank.conditioning().conditioning);
            assert_eq!(bank.conditioning().t, 0);
        }
        let ts: Vec<_> = bank.entries().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0, 4, 5]);
    }

    #[test]
    fn bank_capacity_must_be_at_least_two() {
        assert_eq!(
            MemoryBank::new(1, 0, entry_vec(0), FeatureVec::basis(2, 0)),
            Err(CoreError::CapacityTooSmall(1))
        );
    }

    #[test]
    fn bank_deserialization_checks_invariants() {
        let bank = MemoryBank::new(2, 5, entry_vec(0), FeatureVec::basis(2, 0)).unwrap();
        let mut json: serde_json::Value = serde_json::to_value(&bank).unwrap();
        json["entries"][0]["conditioning"] = serde_json::Value::Bool(false);
        assert!(serde_json::from_value::<MemoryBank>(json).is_err());
    }

    #[test]
    fn decision_threshold_is_strict() {
        assert!(!SelectionDecision::thresholded(0, 0.5, 0.5).saved);
        assert!(SelectionDecision::thresholded(0, 0.5000001, 0.5).saved);
    }

    #[test]
    fn empty_group_is_rejected() {
        assert_eq!(Group::new(0, vec![]), Err(CoreError::EmptyGroup));
    }
}
