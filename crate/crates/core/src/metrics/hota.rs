use std::collections::{BTreeMap, BTreeSet};

use crate::types::TrackId;

use super::matching::{match_frame, FrameDetections};
use super::MetricsError;

/// HOTA decomposition averaged over the threshold set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotaScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
}

/// `0.05, 0.10, ..., 0.95`
pub fn default_alphas() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

pub(crate) fn check_alphas(alphas: &[f64]) -> Result<(), MetricsError> {
    if alphas.is_empty() {
        return Err(MetricsError::InvalidAlpha(f64::NAN));
    }
    match alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        Some(&a) => Err(MetricsError::InvalidAlpha(a)),
        None => Ok(()),
    }
}

/// Scores for one threshold from the chosen `(g, p)` pairs of every frame.
pub(crate) fn score_alpha(
    frames: &[FrameDetections],
    matches: &[Vec<(usize, usize)>],
) -> HotaScores {
    let mut gt_count: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pr_count: BTreeMap<TrackId, u64> = BTreeMap::new();
    let mut pair_count: BTreeMap<(usize, TrackId), u64> = BTreeMap::new();
    let (mut n_gt, mut n_pr, mut tp) = (0u64, 0u64, 0u64);
    for (f, m) in frames.iter().zip(matches) {
        for &g in &f.gt_ids {
            *gt_count.entry(g).or_default() += 1;
        }
        for &p in &f.track_ids {
            *pr_count.entry(p).or_default() += 1;
        }
        n_gt += f.gt_ids.len() as u64;
        n_pr += f.track_ids.len() as u64;
        for &(g, p) in m {
            *pair_count.entry((f.gt_ids[g], f.track_ids[p])).or_default() += 1;
            tp += 1;
        }
    }
    if n_gt == 0 && n_pr == 0 {
        return HotaScores {
            hota: 1.0,
            deta: 1.0,
            assa: 1.0,
        };
    }
    if tp == 0 {
        return HotaScores {
            hota: 0.0,
            deta: 0.0,
            assa: 0.0,
        };
    }
    let fn_ = n_gt - tp;
    let fp = n_pr - tp;
    let deta = tp as f64 / (tp + fn_ + fp) as f64;
    let mut assoc_sum = 0.0;
    for (&(g, p), &tpa) in &pair_count {
        let fna = gt_count[&g] - tpa;
        let fpa = pr_count[&p] - tpa;
        assoc_sum += tpa as f64 * (tpa as f64 / (tpa + fna + fpa) as f64);
    }
    let assa = assoc_sum / tp as f64;
    HotaScores {
        hota: (deta * assa).sqrt(),
        deta,
        assa,
    }
}

fn average(per_alpha: impl Iterator<Item = HotaScores>, n: usize) -> HotaScores {
    let (mut h, mut d, mut a) = (0.0, 0.0, 0.0);
    for s in per_alpha {
        h += s.hota;
        d += s.deta;
        a += s.assa;
    }
    let n = n as f64;
    HotaScores {
        hota: h / n,
        deta: d / n,
        assa: a / n,
    }
}

/// HOTA, DetA and AssA over `alphas`, using for each threshold the per-frame
/// matching that maximizes true positives and then summed IoU.
pub fn hota(frames: &[FrameDetections], alphas: &[f64]) -> Result<HotaScores, MetricsError> {
    check_alphas(alphas)?;
    let per_alpha = alphas.iter().map(|&alpha| {
        let matches: Vec<_> = frames.iter().map(|f| match_frame(&f.iou, alpha)).collect();
        score_alpha(frames, &matches)
    });
    Ok(average(per_alpha, alphas.len()))
}

pub const ORACLE_MAX_TRACKS: usize = 4;
pub const ORACLE_MAX_FRAMES: usize = 6;
pub const ORACLE_MAX_IDENTITIES: usize = 4;

/// Exhaustive reference for [`hota`] on tiny instances: tries every partial
/// one-to-one assignment in every frame.
pub fn oracle_hota(frames: &[FrameDetections], alphas: &[f64]) -> Result<HotaScores, MetricsError> {
    check_alphas(alphas)?;
    let tracks: BTreeSet<TrackId> = frames
        .iter()
        .flat_map(|f| f.track_ids.iter().copied())
        .collect();
    let identities: BTreeSet<usize> = frames
        .iter()
        .flat_map(|f| f.gt_ids.iter().copied())
        .collect();
    if frames.len() > ORACLE_MAX_FRAMES
        || tracks.len() > ORACLE_MAX_TRACKS
        || identities.len() > ORACLE_MAX_IDENTITIES
        || frames.iter().any(|f| {
            f.gt_ids.len() > ORACLE_MAX_IDENTITIES || f.track_ids.len() > ORACLE_MAX_TRACKS
        })
    {
        return Err(MetricsError::InstanceTooLarge);
    }
    let per_alpha = alphas.iter().map(|&alpha| {
        let matches: Vec<_> = frames
            .iter()
            .map(|f| best_enumerated(&f.iou, f.track_ids.len(), alpha))
            .collect();
        score_alpha(frames, &matches)
    });
    Ok(average(per_alpha, alphas.len()))
}

/// Match count, IoU sum and pairs of the best assignment so far.
type Best = Option<(usize, f64, Vec<(usize, usize)>)>;

/// Enumerates assignments `gt -> Option<pred>`; keeps the one with most
/// matches, then largest IoU sum, then lexicographically smallest.
fn best_enumerated(iou: &[Vec<f64>], n_pred: usize, alpha: f64) -> Vec<(usize, usize)> {
    let mut best: Best = None;
    let mut current = Vec::new();
    let mut used = vec![false; n_pred];
    enumerate(iou, alpha, 0, &mut used, &mut current, &mut best);
    best.map(|b| b.2).unwrap_or_default()
}

fn enumerate(
    iou: &[Vec<f64>],
    alpha: f64,
    g: usize,
    used: &mut [bool],
    current: &mut Vec<(usize, usize)>,
    best: &mut Best,
) {
    if g == iou.len() {
        let sum: f64 = current.iter().map(|&(g, p)| iou[g][p]).sum();
        let better = match best {
            None => true,
            Some((n, s, pairs)) => {
                current.len() > *n
                    || (current.len() == *n && (sum > *s || (sum == *s && *current < *pairs)))
            }
        };
        if better {
            *best = Some((current.len(), sum, current.clone()));
        }
        return;
    }
    for p in 0..used.len() {
        if !used[p] && iou[g][p] >= alpha && iou[g][p] > 0.0 {
            used[p] = true;
            current.push((g, p));
            enumerate(iou, alpha, g + 1, used, current, best);
            current.pop();
            used[p] = false;
        }
    }
    enumerate(iou, alpha, g + 1, used, current, best);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MaskGeom;

    fn disc(x: f64) -> MaskGeom {
        MaskGeom::new(x, 0.0, 1.0, 1.0).unwrap()
    }

    fn frame(gt: &[(usize, f64)], pred: &[(TrackId, f64)]) -> FrameDetections {
        FrameDetections::new(
            gt.iter().map(|&(i, x)| (i, disc(x))).collect(),
            pred.iter().map(|&(i, x)| (i, disc(x))).collect(),
        )
    }

    /// Center offset of two unit discs giving the requested IoU, by bisection.
    fn offset_for_iou(target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::geometry::iou(&disc(0.0), &disc(mid)) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn perfect_run_scores_one() {
        let frames = vec![frame(&[(0, 0.0), (1, 10.0)], &[(5, 0.0), (6, 10.0)]); 3];
        let s = hota(&frames, &default_alphas()).unwrap();
        assert_eq!((s.hota, s.deta, s.assa), (1.0, 1.0, 1.0));
        assert_eq!(oracle_hota(&frames, &default_alphas()).unwrap(), s);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let frames = vec![frame(&[(0, 0.0)], &[]); 2];
        let s = hota(&frames, &default_alphas()).unwrap();
        assert_eq!((s.hota, s.deta, s.assa), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_pair_threshold() {
        let frames = vec![frame(&[(0, 0.0)], &[(0, offset_for_iou(0.6))])];
        let at = |a: f64| oracle_hota(&frames, &[a]).unwrap();
        assert_eq!(at(0.5).deta, 1.0);
        assert_eq!(at(0.7).deta, 0.0);
        assert_eq!(hota(&frames, &[0.5]).unwrap().deta, 1.0);
        assert_eq!(hota(&frames, &[0.7]).unwrap().deta, 0.0);
    }

    #[test]
    fn identity_swap_halves_association() {
        // Identity 0 is track 1 for two frames, then track 2 for two frames.
        let frames = vec![
            frame(&[(0, 0.0)], &[(1, 0.0)]),
            frame(&[(0, 0.0)], &[(1, 0.0)]),
            frame(&[(0, 0.0)], &[(2, 0.0)]),
            frame(&[(0, 0.0)], &[(2, 0.0)]),
        ];
        let s = hota(&frames, &[0.5]).unwrap();
        assert_eq!(s.deta, 1.0);
        assert!((s.assa - 0.5).abs() < 1e-15);
        assert!((s.hota - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let frames = vec![frame(&[(0, 0.0)], &[(0, 0.0)]); 7];
        assert!(matches!(
            oracle_hota(&frames, &[0.5]),
            Err(MetricsError::InstanceTooLarge)
        ));
    }

    #[test]
    fn alphas_are_validated() {
        assert!(hota(&[], &[]).is_err());
        assert!(hota(&[], &[0.0]).is_err());
        assert!(hota(&[], &[1.5]).is_err());
    }
}
