//! Memory selection rules.
//!
//! Two rules decide whether a track's current-frame features enter its
//! memory bank:
//!
//! * [`PolicyKind::Coupled`]: one confidence `S_t = mean(q) * p` is computed
//!   for every track of a same-timestamp group and a single threshold test
//!   saves or skips all of them together.
//! * [`PolicyKind::Decoupled`]: each track thresholds its own confidence
//!   `S_i = q_i * p`, so the update frequency of one target never depends on
//!   another target's score.
//!
//! Both rules save on a strict `S > tau`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FeatureVec, FrameIndex, Score, SelectionDecision, Track, TrackId};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("selection group is empty")]
    EmptyGroup,
    #[error("length mismatch: {tracks} tracks, {features} features, {decisions} decisions")]
    LengthMismatch {
        tracks: usize,
        features: usize,
        decisions: usize,
    },
    #[error("decision for track {decision} applied to track {track}")]
    TrackMismatch { track: TrackId, decision: TrackId },
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Coupled,
    Decoupled,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::Coupled, PolicyKind::Decoupled];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Coupled => "coupled",
            PolicyKind::Decoupled => "decoupled",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coupled" => Ok(PolicyKind::Coupled),
            "decoupled" => Ok(PolicyKind::Decoupled),
            other => Err(format!(
                "unknown policy `{other}` (expected coupled or decoupled)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub tau: f64,
    pub kind: PolicyKind,
}

impl PolicyConfig {
    pub fn new(tau: f64, kind: PolicyKind) -> Result<Self, PolicyError> {
        if tau > 0.0 && tau < 1.0 {
            Ok(PolicyConfig { tau, kind })
        } else {
            Err(PolicyError::InvalidTau(tau))
        }
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            tau: DEFAULT_TAU,
            kind: PolicyKind::Decoupled,
        }
    }
}

/// Group confidence `S_t = (1/N) * sum(q_i) * p`.
///
/// The mean is clamped to `[min q, max q]`: equal scores then average to
/// themselves exactly, and the result stays non-decreasing in every `q_i`.
pub fn group_score(q_list: &[Score], p: Score) -> Result<f64, PolicyError> {
    let first = q_list.first().ok_or(PolicyError::EmptyGroup)?.value();
    let mut sum = 0.0;
    let mut lo = first;
    let mut hi = first;
    for q in q_list {
        let q = q.value();
        sum += q;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let mean = (sum / q_list.len() as f64).clamp(lo, hi);
    Ok(mean * p.value())
}

/// Per-target confidence `S_i = q_i * p`.
pub fn per_target_score(q: Score, p: Score) -> f64 {
    q.value() * p.value()
}

/// Selection decisions for one group, in member order.
pub fn decide(
    config: &PolicyConfig,
    members: &[(TrackId, Score)],
    p: Score,
) -> Result<Vec<SelectionDecision>, PolicyError> {
    if members.is_empty() {
        return Err(PolicyError::EmptyGroup);
    }
    let decisions = match config.kind {
        PolicyKind::Coupled => {
            let q_list: Vec<Score> = members.iter().map(|&(_, q)| q).collect();
            let s = group_score(&q_list, p)?;
            members
                .iter()
                .map(|&(id, _)| SelectionDecision::thresholded(id, s, config.tau))
                .collect()
        }
        PolicyKind::Decoupled => members
            .iter()
            .map(|&(id, q)| SelectionDecision::thresholded(id, per_target_score(q, p), config.tau))
            .collect(),
    };
    Ok(decisions)
}

/// Applies one frame's decisions: every saved track gains a new window
/// entry at frame `t`; skipped tracks are left untouched.
pub fn apply_updates(
    tracks: &mut [Track],
    t: FrameIndex,
    features: &[(FeatureVec, FeatureVec)],
    decisions: &[SelectionDecision],
) -> Result<(), PolicyError> {
    if tracks.len() != features.len() || tracks.len() != decisions.len() {
        return Err(PolicyError::LengthMismatch {
            tracks: tracks.len(),
            features: features.len(),
            decisions: decisions.len(),
        });
    }
    for (track, decision) in tracks.iter().zip(decisions) {
        if track.track_id() != decision.track_id {
            return Err(PolicyError::TrackMismatch {
                track: track.track_id(),
                decision: decision.track_id,
            });
        }
    }
    for ((track, (feature, pointer)), decision) in tracks.iter_mut().zip(features).zip(decisions) {
        if decision.saved {
            track.bank.push(t, feature.clone(), pointer.clone());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MaskGeom, MemoryBank};
    use proptest::prelude::*;

    fn s(v: f64) -> Score {
        Score::new(v).unwrap()
    }

    fn members(qs: &[f64]) -> Vec<(TrackId, Score)> {
        qs.iter()
            .enumerate()
            .map(|(i, &q)| (i as TrackId, s(q)))
            .collect()
    }

    fn cfg(kind: PolicyKind, tau: f64) -> PolicyConfig {
        PolicyConfig::new(tau, kind).unwrap()
    }

    #[test]
    fn group_score_examples() {
        let g = group_score(&[s(0.9), s(0.9), s(0.0)], s(1.0)).unwrap();
        assert!((g - 0.6).abs() < 1e-15);
        assert!((group_score(&[s(0.7)], s(0.5)).unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(group_score(&[s(0.0), s(0.0)], s(1.0)).unwrap(), 0.0);
        assert_eq!(group_score(&[], s(1.0)), Err(PolicyError::EmptyGroup));
    }

    #[test]
    fn per_target_score_examples() {
        assert_eq!(per_target_score(s(0.0), s(1.0)), 0.0);
        assert!((per_target_score(s(0.9), s(0.9)) - 0.81).abs() < 1e-15);
        assert_eq!(per_target_score(s(1.0), s(1.0)), 1.0);
    }

    #[test]
    fn coupled_saves_the_blank_member() {
        let d = decide(
            &cfg(PolicyKind::Coupled, 0.5),
            &members(&[0.9, 0.9, 0.0]),
            s(1.0),
        )
        .unwrap();
        assert!(d.iter().all(|d| d.saved));
        assert!(d.iter().all(|d| (d.score_s - 0.6).abs() < 1e-15));
    }

    #[test]
    fn decoupled_skips_the_blank_member() {
        let d = decide(
            &cfg(PolicyKind::Decoupled, 0.5),
            &members(&[0.9, 0.9, 0.0]),
            s(1.0),
        )
        .unwrap();
        let saved: Vec<bool> = d.iter().map(|d| d.saved).collect();
        assert_eq!(saved, vec![true, true, false]);
    }

    #[test]
    fn single_member_policies_agree() {
        let c = decide(&cfg(PolicyKind::Coupled, 0.5), &members(&[0.6]), s(0.9)).unwrap();
        let d = decide(&cfg(PolicyKind::Decoupled, 0.5), &members(&[0.6]), s(0.9)).unwrap();
        assert_eq!(c, d);
        assert!(c[0].saved);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert_eq!(
            decide(&PolicyConfig::default(), &[], s(1.0)),
            Err(PolicyError::EmptyGroup)
        );
    }

    #[test]
    fn tau_must_be_open_unit_interval() {
        assert!(PolicyConfig::new(0.0, PolicyKind::Coupled).is_err());
        assert!(PolicyConfig::new(1.0, PolicyKind::Coupled).is_err());
        assert!(PolicyConfig::new(1.5, PolicyKind::Coupled).is_err());
    }

    fn track(id: TrackId, window: usize, capacity: usize) -> Track {
        let bank = MemoryBank::new(
            capacity,
            0,
            FeatureVec::basis(16, 0),
            FeatureVec::basis(4, 0),
        )
        .unwrap();
        let mut t = Track::new(
            id,
            id as u32,
            bank,
            0,
            MaskGeom::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        );
        for k in 1..=window {
            t.bank.push(
                k as u64,
                FeatureVec::basis(16, k % 16),
                FeatureVec::basis(4, 1),
            );
        }
        t
    }

    fn pair(axis: usize) -> (FeatureVec, FeatureVec) {
        (FeatureVec::basis(16, axis), FeatureVec::basis(4, 2))
    }

    #[test]
    fn full_bank_evicts_oldest_non_conditioning_entry() {
        let mut tracks = vec![track(0, 6, 7)];
        assert_eq!(tracks[0].bank.len(), 7);
        let before: Vec<u64> = tracks[0].bank.entries().iter().map(|e| e.t).collect();
        assert_eq!(before, vec![0, 1, 2, 3, 4, 5, 6]);
        let d = [SelectionDecision::thresholded(0, 0.9, 0.5)];
        apply_updates(&mut tracks, 7, &[pair(9)], &d).unwrap();
        let bank = &tracks[0].bank;
        let after: Vec<u64> = bank.entries().iter().map(|e| e.t).collect();
        assert_eq!(after, vec![0, 2, 3, 4, 5, 6, 7]);
        assert!(bank.entries()[0].conditioning);
        assert_eq!(bank.entries()[6].feature, FeatureVec::basis(16, 9));
    }

    #[test]
    fn skipped_bank_is_unchanged() {
        let mut tracks = vec![track(0, 3, 7)];
        let before = tracks.clone();
        let d = [SelectionDecision::thresholded(0, 0.2, 0.5)];
        apply_updates(&mut tracks, 4, &[pair(9)], &d).unwrap();
        assert_eq!(tracks, before);
    }

    #[test]
    fn conditioning_only_bank_grows_to_two() {
        let mut tracks = vec![track(0, 0, 7)];
        let d = [SelectionDecision::thresholded(0, 0.9, 0.5)];
        apply_updates(&mut tracks, 1, &[pair(3)], &d).unwrap();
        assert_eq!(tracks[0].bank.len(), 2);
        assert!(tracks[0].bank.entries()[0].conditioning);
        assert!(!tracks[0].bank.entries()[1].conditioning);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut tracks = vec![track(0, 0, 7), track(1, 0, 7)];
        let d = [SelectionDecision::thresholded(0, 0.9, 0.5)];
        assert!(matches!(
            apply_updates(&mut tracks, 1, &[pair(3)], &d),
            Err(PolicyError::LengthMismatch { .. })
        ));
    }

    fn score_strategy() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0..=1.0f64]
    }

    proptest! {
        #[test]
        fn mean_identity(qs in prop::collection::vec(score_strategy(), 1..12), p in score_strategy()) {
            let q_list: Vec<Score> = qs.iter().map(|&q| s(q)).collect();
            let g = group_score(&q_list, s(p)).unwrap();
            let mean: f64 = q_list.iter().map(|&q| per_target_score(q, s(p))).sum::<f64>() / qs.len() as f64;
            prop_assert!((g - mean).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&g));
        }

        #[test]
        fn locality_of_decoupled(
            qs in prop::collection::vec(score_strategy(), 2..10),
            p in score_strategy(),
            tau in 0.01..0.99f64,
            j in 0usize..10,
            new_q in score_strategy(),
        ) {
            let config = cfg(PolicyKind::Decoupled, tau);
            let j = j % qs.len();
            let base = decide(&config, &members(&qs), s(p)).unwrap();
            let mut perturbed = qs.clone();
            perturbed[j] = new_q;
            let other = decide(&config, &members(&perturbed), s(p)).unwrap();
            for i in (0..qs.len()).filter(|&i| i != j) {
                prop_assert_eq!(base[i], other[i]);
            }
        }

        #[test]
        fn coupled_is_uniform_and_equal_scores_agree(
            qs in prop::collection::vec(score_strategy(), 1..10),
            q in score_strategy(),
            p in score_strategy(),
            tau in 0.01..0.99f64,
        ) {
            let c = decide(&cfg(PolicyKind::Coupled, tau), &members(&qs), s(p)).unwrap();
            prop_assert!(c.iter().all(|d| d.saved == c[0].saved));

            let equal = vec![q; qs.len()];
            let c = decide(&cfg(PolicyKind::Coupled, tau), &members(&equal), s(p)).unwrap();
            let d = decide(&cfg(PolicyKind::Decoupled, tau), &members(&equal), s(p)).unwrap();
            for (a, b) in c.iter().zip(&d) {
                prop_assert_eq!(a.saved, b.saved);
            }
        }
    }
}
