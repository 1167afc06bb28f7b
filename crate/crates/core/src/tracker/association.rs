//! Observation-to-track association, memory readout and re-identification.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::types::{FeatureVec, MaskGeom, MemoryBank, Observation, Slot, Track, TrackId};

use super::{TrackerConfig, TrackingMode};

/// Best cosine between `embedding` and the bank's working memory.
///
/// The working memory is the FIFO window; the conditioning entry only
/// answers when the window is still empty, so a bank whose window has been
/// flushed with pollution no longer recognizes its target.
pub fn readout(bank: &MemoryBank, embedding: &FeatureVec) -> f64 {
    let entries = if bank.window().is_empty() {
        bank.entries()
    } else {
        bank.window()
    };
    entries
        .iter()
        .map(|e| e.feature.cosine(embedding))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Center distance within `gate * (r_obs + r_track)`.
pub fn motion_gate_passes(obs: &MaskGeom, last: &MaskGeom, gate: f64) -> bool {
    obs.center_distance(last) <= gate * (obs.radius() + last.radius())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// Observation slot to matched track.
    pub matched: BTreeMap<Slot, TrackId>,
    /// Visible observations left without a track, in slot order.
    pub unmatched_observations: Vec<Slot>,
    /// Previously active tracks that received no observation.
    pub unobserved_tracks: Vec<TrackId>,
}

/// Matches visible observations of `frame` to the active tracks.
///
/// Blank observations never match. In PVS mode an observation can only go
/// to the active track bound to its slot; in PCS mode pairs compete
/// greedily by descending similarity, ties broken by lowest slot, then
/// lowest track id.
pub fn associate(
    observations: &[Observation],
    tracks: &[Track],
    config: &TrackerConfig,
) -> Association {
    let visible: Vec<&Observation> = {
        let mut v: Vec<&Observation> = observations.iter().filter(|o| !o.is_blank()).collect();
        v.sort_by_key(|o| o.slot);
        v
    };
    let active: Vec<&Track> = tracks.iter().filter(|t| t.active).collect();
    let mut matched = BTreeMap::new();

    match config.mode {
        TrackingMode::Pvs => {
            for obs in &visible {
                let bound = active.iter().find(|t| t.slot == obs.slot);
                if let Some(track) = bound {
                    if motion_gate_passes(&obs.mask, &track.last_mask, config.motion_gate) {
                        matched.insert(obs.slot, track.track_id());
                    }
                }
            }
        }
        TrackingMode::Pcs => {
            let mut pairs: Vec<(f64, Slot, TrackId)> = Vec::new();
            for obs in &visible {
                for track in &active {
                    if !motion_gate_passes(&obs.mask, &track.last_mask, config.motion_gate) {
                        continue;
                    }
                    let sim = readout(&track.bank, &obs.embedding);
                    if sim >= config.assoc_threshold {
                        pairs.push((sim, obs.slot, track.track_id()));
                    }
                }
            }
            pairs.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut taken_tracks = Vec::new();
            for (_, slot, track_id) in pairs {
                if matched.contains_key(&slot) || taken_tracks.contains(&track_id) {
                    continue;
                }
                matched.insert(slot, track_id);
                taken_tracks.push(track_id);
            }
        }
    }

    let unmatched_observations = visible
        .iter()
        .map(|o| o.slot)
        .filter(|s| !matched.contains_key(s))
        .collect();
    let unobserved_tracks = active
        .iter()
        .map(|t| t.track_id())
        .filter(|id| !matched.values().any(|m| m == id))
        .collect();
    Association {
        matched,
        unmatched_observations,
        unobserved_tracks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reidentification {
    Existing(TrackId),
    NewTrack,
}

/// Picks the inactive track whose memory best recognizes `obs`, provided the
/// readout reaches `reid_threshold`; ties go to the lowest track id.
pub fn reidentify<'a>(
    obs: &Observation,
    inactive_tracks: impl IntoIterator<Item = &'a Track>,
    reid_threshold: f64,
) -> Reidentification {
    let mut best: Option<(f64, TrackId)> = None;
    for track in inactive_tracks {
        let score = readout(&track.bank, &obs.embedding);
        if score < reid_threshold {
            continue;
        }
        let better = match best {
            None => true,
            Some((s, id)) => score > s || (score == s && track.track_id() < id),
        };
        if better {
            best = Some((score, track.track_id()));
        }
    }
    match best {
        Some((_, id)) => Reidentification::Existing(id),
        None => Reidentification::NewTrack,
    }
}
