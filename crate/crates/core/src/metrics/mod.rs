//! Segmentation and tracking quality of a run against ground truth.

mod boundary;
mod hota;
mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyKind;
use crate::record::RunRecord;
use crate::scenario::GroundTruth;

pub use crate::geometry::iou;
pub use boundary::{boundary_f, Raster, BOUNDARY_TOLERANCE, MIN_RESOLUTION};
pub use hota::{
    default_alphas, hota, oracle_hota, HotaScores, ORACLE_MAX_FRAMES, ORACLE_MAX_IDENTITIES,
    ORACLE_MAX_TRACKS,
};
pub use matching::{frame_detections, match_frame, FrameDetections};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(
        "run covers {run_frames} frames but ground truth covers {gt_frames} (or indices differ)"
    )]
    FrameRangeMismatch { run_frames: usize, gt_frames: usize },
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    ResolutionTooSmall(u32),
    #[error("threshold {0} is outside (0, 1] (or the threshold set is empty)")]
    InvalidAlpha(f64),
    #[error("instance too large for exhaustive evaluation")]
    InstanceTooLarge,
    #[error("density {n}, seed {seed}: no {policy} run")]
    MissingPolicy {
        n: usize,
        seed: u64,
        policy: PolicyKind,
    },
}

pub const DEFAULT_RESOLUTION: u32 = 256;
pub const DEFAULT_IDSW_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub alphas: Vec<f64>,
    pub resolution: u32,
    pub idsw_alpha: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            alphas: default_alphas(),
            resolution: DEFAULT_RESOLUTION,
            idsw_alpha: DEFAULT_IDSW_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "JF")]
    pub jf: f64,
    #[serde(rename = "HOTA")]
    pub hota: f64,
    #[serde(rename = "DetA")]
    pub deta: f64,
    #[serde(rename = "AssA")]
    pub assa: f64,
    #[serde(rename = "IDSW")]
    pub idsw: u64,
}

/// Per-frame pairs `(g, p)` with positive overlap maximizing the number of
/// pairs, then summed IoU.
fn overlap_matches(frames: &[FrameDetections]) -> Vec<Vec<(usize, usize)>> {
    frames
        .iter()
        .map(|f| match_frame(&f.iou, f64::MIN_POSITIVE))
        .collect()
}

/// Mean of `score(frame, g, p)` over visible identities; identities left
/// without a prediction contribute 0. No visible identity at all gives 1.
fn mean_over_identities(
    frames: &[FrameDetections],
    matches: &[Vec<(usize, usize)>],
    mut score: impl FnMut(&FrameDetections, usize, usize) -> f64,
) -> f64 {
    let visible: usize = frames.iter().map(|f| f.gt_ids.len()).sum();
    if visible == 0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for (f, m) in frames.iter().zip(matches) {
        for &(g, p) in m {
            sum += score(f, g, p);
        }
    }
    (sum / visible as f64).clamp(0.0, 1.0)
}

/// Region similarity: mean IoU over visible ground-truth identities.
pub fn j_score(run: &RunRecord, gt: &GroundTruth) -> Result<f64, MetricsError> {
    let frames = frame_detections(run, gt)?;
    Ok(j_from(&frames))
}

fn j_from(frames: &[FrameDetections]) -> f64 {
    mean_over_identities(frames, &overlap_matches(frames), |f, g, p| f.iou[g][p])
}

/// Boundary similarity: mean boundary F-measure over visible ground-truth
/// identities, on a raster of `resolution` pixels along the world's longer
/// side.
pub fn f_boundary(run: &RunRecord, gt: &GroundTruth, resolution: u32) -> Result<f64, MetricsError> {
    let raster = Raster::new(gt.header.world_width, gt.header.world_height, resolution)?;
    let frames = frame_detections(run, gt)?;
    Ok(f_from(&frames, &raster))
}

fn f_from(frames: &[FrameDetections], raster: &Raster) -> f64 {
    mean_over_identities(frames, &overlap_matches(frames), |f, g, p| {
        boundary_f(raster, &f.gt_masks[g], &f.track_masks[p])
    })
}

/// Number of times an identity's matched track changes from its previous
/// match; frames where it is unmatched do not reset the previous match.
pub fn id_switches(run: &RunRecord, gt: &GroundTruth, alpha: f64) -> Result<u64, MetricsError> {
    hota::check_alphas(&[alpha])?;
    let frames = frame_detections(run, gt)?;
    Ok(idsw_from(&frames, alpha))
}

fn idsw_from(frames: &[FrameDetections], alpha: f64) -> u64 {
    let mut last = BTreeMap::new();
    let mut switches = 0;
    for f in frames {
        for (g, p) in match_frame(&f.iou, alpha) {
            let track = f.track_ids[p];
            if let Some(prev) = last.insert(f.gt_ids[g], track) {
                if prev != track {
                    switches += 1;
                }
            }
        }
    }
    switches
}

/// HOTA, DetA and AssA of a run.
pub fn hota_scores(
    run: &RunRecord,
    gt: &GroundTruth,
    alphas: &[f64],
) -> Result<HotaScores, MetricsError> {
    hota(&frame_detections(run, gt)?, alphas)
}

/// All metrics of a run in one pass over its frames.
pub fn evaluate(
    run: &RunRecord,
    gt: &GroundTruth,
    options: &EvalOptions,
) -> Result<MetricsReport, MetricsError> {
    hota::check_alphas(&[options.idsw_alpha])?;
    let raster = Raster::new(
        gt.header.world_width,
        gt.header.world_height,
        options.resolution,
    )?;
    let frames = frame_detections(run, gt)?;
    let h = hota(&frames, &options.alphas)?;
    let j = j_from(&frames);
    let f = f_from(&frames, &raster);
    Ok(MetricsReport {
        j,
        f,
        jf: 0.5 * (j + f),
        hota: h.hota,
        deta: h.deta,
        assa: h.assa,
        idsw: idsw_from(&frames, options.idsw_alpha),
    })
}

/// One evaluated run of a density sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    pub n: usize,
    pub policy: PolicyKind,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Decoupled minus Coupled at one density, paired by seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub seeds: usize,
    pub delta_hota: f64,
    pub delta_hota_se: f64,
    pub delta_idsw: f64,
    pub delta_idsw_se: f64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-density mean and standard error of the seed-paired policy deltas,
/// sorted by density.
pub fn density_gap(samples: &[DensitySample]) -> Result<Vec<GapRow>, MetricsError> {
    let mut by_n: BTreeMap<usize, BTreeMap<u64, [Option<MetricsReport>; 2]>> = BTreeMap::new();
    for s in samples {
        let slot = match s.policy {
            PolicyKind::Coupled => 0,
            PolicyKind::Decoupled => 1,
        };
        by_n.entry(s.n).or_default().entry(s.seed).or_default()[slot] = Some(s.report);
    }
    let mut rows = Vec::with_capacity(by_n.len());
    for (n, seeds) in by_n {
        let mut dh = Vec::with_capacity(seeds.len());
        let mut di = Vec::with_capacity(seeds.len());
        for (seed, pair) in seeds {
            let missing = |policy| MetricsError::MissingPolicy { n, seed, policy };
            let c = pair[0].ok_or_else(|| missing(PolicyKind::Coupled))?;
            let d = pair[1].ok_or_else(|| missing(PolicyKind::Decoupled))?;
            dh.push(d.hota - c.hota);
            di.push(d.idsw as f64 - c.idsw as f64);
        }
        let (delta_hota, delta_hota_se) = mean_and_se(&dh);
        let (delta_idsw, delta_idsw_se) = mean_and_se(&di);
        rows.push(GapRow {
            n,
            seeds: dh.len(),
            delta_hota,
            delta_hota_se,
            delta_idsw,
            delta_idsw_se,
        });
    }
    Ok(rows)
}
