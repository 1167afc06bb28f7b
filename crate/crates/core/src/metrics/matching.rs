//! Per-frame detection pairing between ground truth and predictions.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::geometry::iou;
use crate::record::RunRecord;
use crate::scenario::GroundTruth;
use crate::types::{MaskGeom, TrackId};

use super::MetricsError;

/// Visible detections of one frame and their pairwise IoU.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub gt_ids: Vec<usize>,
    pub gt_masks: Vec<MaskGeom>,
    pub track_ids: Vec<TrackId>,
    pub track_masks: Vec<MaskGeom>,
    /// `iou[g][p]`
    pub iou: Vec<Vec<f64>>,
}

impl FrameDetections {
    pub fn new(gt: Vec<(usize, MaskGeom)>, pred: Vec<(TrackId, MaskGeom)>) -> Self {
        let (gt_ids, gt_masks): (Vec<_>, Vec<_>) = gt.into_iter().unzip();
        let (track_ids, track_masks): (Vec<_>, Vec<_>) = pred.into_iter().unzip();
        let iou = gt_masks
            .iter()
            .map(|g| track_masks.iter().map(|p| iou(g, p)).collect())
            .collect();
        FrameDetections {
            gt_ids,
            gt_masks,
            track_ids,
            track_masks,
            iou,
        }
    }
}

/// Pairs up the frames of a run and its ground truth, keeping only visible
/// masks on both sides.
pub fn frame_detections(
    run: &RunRecord,
    gt: &GroundTruth,
) -> Result<Vec<FrameDetections>, MetricsError> {
    let run_t: Vec<_> = run.frames.iter().map(|f| f.t).collect();
    let gt_t: Vec<_> = gt.frames.iter().map(|f| f.t).collect();
    if run_t != gt_t {
        return Err(MetricsError::FrameRangeMismatch {
            run_frames: run_t.len(),
            gt_frames: gt_t.len(),
        });
    }
    Ok(run
        .frames
        .iter()
        .zip(&gt.frames)
        .map(|(r, g)| {
            let gts = g
                .objects
                .iter()
                .filter(|o| !o.mask.is_blank())
                .map(|o| (o.identity, o.mask))
                .collect();
            let preds = r
                .outputs
                .iter()
                .filter(|o| !o.mask.is_blank())
                .map(|o| (o.track_id, o.mask))
                .collect();
            FrameDetections::new(gts, preds)
        })
        .collect())
}

const MATCH_BONUS: i64 = 1 << 50;
const IOU_SCALE: f64 = (1u64 << 40) as f64;

/// Bijective matching over pairs with IoU >= `alpha` that maximizes the
/// number of pairs, then their summed IoU. Returns `(g, p)` index pairs
/// sorted by `g`.
pub fn match_frame(iou: &[Vec<f64>], alpha: f64) -> Vec<(usize, usize)> {
    let rows = iou.len();
    let cols = iou.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let weight = |g: usize, p: usize| {
        let v = iou[g][p];
        if v >= alpha && v > 0.0 {
            MATCH_BONUS + (v * IOU_SCALE).round() as i64
        } else {
            0
        }
    };
    let mut pairs: Vec<(usize, usize)> = if rows <= cols {
        let m = Matrix::from_fn(rows, cols, |(g, p)| weight(g, p));
        let (_, assign) = kuhn_munkres(&m);
        assign.into_iter().enumerate().collect()
    } else {
        let m = Matrix::from_fn(cols, rows, |(p, g)| weight(g, p));
        let (_, assign) = kuhn_munkres(&m);
        assign
            .into_iter()
            .enumerate()
            .map(|(p, g)| (g, p))
            .collect()
    };
    pairs.retain(|&(g, p)| weight(g, p) > 0);
    pairs.sort_unstable();
    pairs
}
