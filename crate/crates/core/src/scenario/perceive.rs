use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::coverage;
use crate::tracker::random_unit;
use crate::types::{FrameInput, MaskGeom, Observation, Score, Slot};

use super::{GroundTruth, GtFrame, GtHeader, PresenceRule, ScenarioConfig, ScenarioError};

/// Perception noise stream for a scenario seed, independent of the world
/// generation stream.
pub fn perception_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Synthesizes the tracker's view of one ground-truth frame.
///
/// Per identity `i` (emitted on slot `i`):
/// `q_i = clamp(v_i * (1 - crowding) + N(0, sigma_q))`, where crowding is the
/// strongest `kappa * max(cos(e_i, e_d), 0) * coverage(i by d)` over all
/// distractors; the mask center is jittered by `N(0, sigma_pos)`; the
/// embedding is the identity's own when visible and an unrelated unit
/// vector when blank. Presence is `clamp(agg(v) + N(0, sigma_p))`.
///
/// Random draws happen in a fixed order (per identity: q, x, y, then the
/// blank embedding if any; presence last).
pub fn perceive<R: Rng + ?Sized>(
    gt_frame: &GtFrame,
    header: &GtHeader,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<FrameInput, ScenarioError> {
    let noise = config.noise;
    let mut observations = Vec::with_capacity(gt_frame.objects.len());
    for obj in &gt_frame.objects {
        let v = obj.mask.visible_fraction();
        let e = &header.identity_embeddings[obj.identity];
        let crowd = config
            .distractors
            .iter()
            .zip(&header.distractor_embeddings)
            .zip(&gt_frame.distractors)
            .map(|((spec, e_d), mask_d)| {
                spec.crowding * e.cosine(e_d).max(0.0) * coverage(&obj.mask, mask_d)
            })
            .fold(0.0, f64::max);
        let q = Score::clamped(v * (1.0 - crowd) + gaussian(rng, noise.sigma_q));
        let x = obj.mask.center_x() + gaussian(rng, noise.sigma_pos);
        let y = obj.mask.center_y() + gaussian(rng, noise.sigma_pos);
        let embedding = if v > 0.0 {
            e.clone()
        } else {
            random_unit(e.dim(), rng)
        };
        observations.push(Observation {
            slot: obj.identity as Slot,
            mask: MaskGeom::new(x, y, obj.mask.radius(), v)?,
            embedding,
            q,
        });
    }
    let visibilities = gt_frame.objects.iter().map(|o| o.mask.visible_fraction());
    let aggregate = match config.presence {
        PresenceRule::Max => visibilities.fold(0.0, f64::max),
        PresenceRule::Mean => {
            let n = gt_frame.objects.len().max(1) as f64;
            visibilities.sum::<f64>() / n
        }
    };
    let presence = Score::clamped(aggregate + gaussian(rng, noise.sigma_p));
    Ok(FrameInput {
        t: gt_frame.t,
        presence,
        observations,
    })
}

/// Perceives every frame of `gt` with the scenario's perception stream.
pub fn perceive_all(
    gt: &GroundTruth,
    config: &ScenarioConfig,
) -> Result<Vec<FrameInput>, ScenarioError> {
    let mut rng = perception_rng(config.seed);
    gt.frames
        .iter()
        .map(|f| perceive(f, &gt.header, config, &mut rng))
        .collect()
}
