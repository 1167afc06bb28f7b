//! Seeded synthetic world and perception frontend.
//!
//! [`generate`] draws identities (disc masks with frozen appearance
//! embeddings) moving at constant velocity and reflecting off the world
//! bounds, then applies scripted events. [`perceive`] turns one ground-truth
//! frame into the scores, masks and embeddings a tracker consumes.

mod archetype;
mod perceive;

pub use archetype::{archetype, archetype_with_capacity, Archetype};
pub use perceive::{perceive, perceive_all, perception_rng};

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracker::random_unit;
use crate::types::{CoreError, FeatureVec, FrameIndex, MaskGeom};

pub const DEFAULT_EMBEDDING_DIM: usize = 64;
pub const DEFAULT_WORLD_SIZE: f64 = 100.0;

const RADIUS_RANGE: (f64, f64) = (3.0, 6.0);
const SPEED_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("event {index}: window [{start}, {end}) must satisfy start < end <= {frames}")]
    InvalidWindow {
        index: usize,
        start: FrameIndex,
        end: FrameIndex,
        frames: FrameIndex,
    },
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("unknown archetype `{0}`")]
    UnknownArchetype(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Visibility scaled by `1 - severity`.
    Occlusion,
    /// Visibility 0 inside the window.
    ExitReentry,
    /// Velocity multiplied by `1 + 10 * severity`.
    RapidMotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub kind: EventKind,
    pub target: usize,
    pub start: FrameIndex,
    /// Exclusive.
    pub end: FrameIndex,
    pub severity: f64,
}

impl Event {
    pub fn active_at(&self, t: FrameIndex) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorMotion {
    /// Travels alongside its target at a fixed offset.
    Parallel,
    /// Cuts across its target's path, meeting it at mid-sequence.
    Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorSpec {
    pub target: usize,
    /// Cosine between the distractor's and the target's embeddings.
    pub similarity: f64,
    pub motion: DistractorMotion,
    pub crowding: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub sigma_pos: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        sigma_q: 0.0,
        sigma_p: 0.0,
        sigma_pos: 0.0,
    };
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_q: 0.02,
            sigma_p: 0.02,
            sigma_pos: 0.5,
        }
    }
}

/// How the frame presence score aggregates per-target visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceRule {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_targets: usize,
    pub num_frames: FrameIndex,
    pub world_width: f64,
    pub world_height: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    pub presence: PresenceRule,
    pub events: Vec<Event>,
    pub distractors: Vec<DistractorSpec>,
    pub noise: NoiseModel,
}

impl ScenarioConfig {
    /// Plain scenario: no events, no distractors, default noise.
    pub fn basic(num_targets: usize, num_frames: FrameIndex, seed: u64) -> Self {
        ScenarioConfig {
            num_targets,
            num_frames,
            world_width: DEFAULT_WORLD_SIZE,
            world_height: DEFAULT_WORLD_SIZE,
            seed,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            presence: PresenceRule::Max,
            events: Vec::new(),
            distractors: Vec::new(),
            noise: NoiseModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::InvalidConfig(msg));
        if self.num_targets == 0 {
            return bad("num_targets must be at least 1".into());
        }
        if self.num_frames == 0 {
            return bad("num_frames must be at least 1".into());
        }
        let min_side = 2.0 * RADIUS_RANGE.1 + 1.0;
        if !(self.world_width >= min_side && self.world_height >= min_side)
            || !(self.world_width.is_finite() && self.world_height.is_finite())
        {
            return bad(format!(
                "world sides must be finite and at least {min_side}"
            ));
        }
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be at least 2".into());
        }
        let n = &self.noise;
        for (name, v) in [
            ("sigma_q", n.sigma_q),
            ("sigma_p", n.sigma_p),
            ("sigma_pos", n.sigma_pos),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative real"));
            }
        }
        for (index, ev) in self.events.iter().enumerate() {
            if !(ev.start < ev.end && ev.end <= self.num_frames) {
                return Err(ScenarioError::InvalidWindow {
                    index,
                    start: ev.start,
                    end: ev.end,
                    frames: self.num_frames,
                });
            }
            if ev.target >= self.num_targets {
                return bad(format!(
                    "event {index} targets unknown identity {}",
                    ev.target
                ));
            }
            if !(0.0..=1.0).contains(&ev.severity) {
                return bad(format!("event {index} severity must lie in [0, 1]"));
            }
        }
        for (index, d) in self.distractors.iter().enumerate() {
            if d.target >= self.num_targets {
                return bad(format!(
                    "distractor {index} targets unknown identity {}",
                    d.target
                ));
            }
            if !(0.0..=1.0).contains(&d.similarity) || !(0.0..=1.0).contains(&d.crowding) {
                return bad(format!(
                    "distractor {index} similarity and crowding must lie in [0, 1]"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtObject {
    pub identity: usize,
    /// `visible_fraction` carries the identity's visibility in this frame.
    pub mask: MaskGeom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrame {
    pub t: FrameIndex,
    pub objects: Vec<GtObject>,
    /// One full-visibility disc per distractor, in config order.
    pub distractors: Vec<MaskGeom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtMetadata {
    /// `|cos|` between every pair of identity embeddings (row-major, N x N).
    pub pairwise_abs_cos: Vec<Vec<f64>>,
    pub max_pairwise_abs_cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtHeader {
    pub seed: u64,
    pub world_width: f64,
    pub world_height: f64,
    pub identity_embeddings: Vec<FeatureVec>,
    pub distractor_embeddings: Vec<FeatureVec>,
    pub metadata: GtMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub header: GtHeader,
    pub frames: Vec<GtFrame>,
}

#[derive(Debug, Clone, Copy)]
struct Body {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    radius: f64,
}

impl Body {
    fn advance(&mut self, speedup: f64, width: f64, height: f64) {
        self.x += self.vx * speedup;
        self.y += self.vy * speedup;
        let (x, vx) = reflect(self.x, self.vx, self.radius, width - self.radius);
        let (y, vy) = reflect(self.y, self.vy, self.radius, height - self.radius);
        self.x = x;
        self.vx = vx;
        self.y = y;
        self.vy = vy;
    }
}

/// Mirrors `pos` back into `[lo, hi]`, flipping the velocity once per bounce.
fn reflect(mut pos: f64, mut vel: f64, lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    for _ in 0..64 {
        if pos < lo {
            pos = 2.0 * lo - pos;
            vel = -vel;
        } else if pos > hi {
            pos = 2.0 * hi - pos;
            vel = -vel;
        } else {
            return (pos, vel);
        }
    }
    (lo + (pos - lo).rem_euclid(span), vel)
}

fn world_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Unit vector with cosine exactly `similarity` (up to rounding) to `base`.
fn correlated_unit<R: Rng + ?Sized>(base: &FeatureVec, similarity: f64, rng: &mut R) -> FeatureVec {
    loop {
        let u = random_unit(base.dim(), rng);
        let along = u.cosine(base);
        let perp: Vec<f64> = u
            .components()
            .iter()
            .zip(base.components())
            .map(|(a, b)| a - along * b)
            .collect();
        let Ok(perp) = FeatureVec::normalized(perp) else {
            continue;
        };
        let ortho = (1.0 - similarity * similarity).max(0.0).sqrt();
        let mixed = base
            .components()
            .iter()
            .zip(perp.components())
            .map(|(b, p)| similarity * b + ortho * p)
            .collect();
        if let Ok(v) = FeatureVec::normalized(mixed) {
            return v;
        }
    }
}

pub fn generate(config: &ScenarioConfig) -> Result<GroundTruth, ScenarioError> {
    config.validate()?;
    let mut rng = world_rng(config.seed);
    let (w, h) = (config.world_width, config.world_height);

    let mut bodies = Vec::with_capacity(config.num_targets);
    let mut embeddings = Vec::with_capacity(config.num_targets);
    for _ in 0..config.num_targets {
        let radius = rng.random_range(RADIUS_RANGE.0..RADIUS_RANGE.1);
        let x = rng.random_range(radius..w - radius);
        let y = rng.random_range(radius..h - radius);
        let heading = rng.random_range(0.0..2.0 * PI);
        let speed = rng.random_range(SPEED_RANGE.0..SPEED_RANGE.1);
        bodies.push(Body {
            x,
            y,
            vx: speed * heading.cos(),
            vy: speed * heading.sin(),
            radius,
        });
        embeddings.push(random_unit(config.embedding_dim, &mut rng));
    }
    let distractor_embeddings: Vec<FeatureVec> = config
        .distractors
        .iter()
        .map(|d| correlated_unit(&embeddings[d.target], d.similarity, &mut rng))
        .collect();

    // Target trajectories first; distractors are placed relative to them.
    let mut track: Vec<Vec<Body>> = Vec::with_capacity(config.num_frames as usize);
    for t in 0..config.num_frames {
        track.push(bodies.clone());
        for (i, body) in bodies.iter_mut().enumerate() {
            let speedup = config
                .events
                .iter()
                .filter(|e| e.kind == EventKind::RapidMotion && e.target == i && e.active_at(t))
                .map(|e| 1.0 + 10.0 * e.severity)
                .fold(1.0, f64::max);
            body.advance(speedup, w, h);
        }
    }

    let meet = (config.num_frames / 2) as f64;
    let mut frames = Vec::with_capacity(track.len());
    for (t, state) in track.iter().enumerate() {
        let t = t as FrameIndex;
        let mut objects = Vec::with_capacity(state.len());
        for (i, b) in state.iter().enumerate() {
            let mut v: f64 = 1.0;
            for e in config
                .events
                .iter()
                .filter(|e| e.target == i && e.active_at(t))
            {
                match e.kind {
                    EventKind::Occlusion => v *= 1.0 - e.severity,
                    EventKind::ExitReentry => v = 0.0,
                    EventKind::RapidMotion => {}
                }
            }
            objects.push(GtObject {
                identity: i,
                mask: MaskGeom::new(b.x, b.y, b.radius, v.clamp(0.0, 1.0))?,
            });
        }
        let mut distractors = Vec::with_capacity(config.distractors.len());
        for d in &config.distractors {
            let b = state[d.target];
            let speed = b.vx.hypot(b.vy);
            let (ux, uy) = (b.vx / speed, b.vy / speed);
            let (x, y) = match d.motion {
                // Offset half a radius sideways from the target's heading.
                DistractorMotion::Parallel => {
                    (b.x - 0.5 * b.radius * uy, b.y + 0.5 * b.radius * ux)
                }
                // Perpendicular pass at twice the target's speed.
                DistractorMotion::Crossing => {
                    let dt = t as f64 - meet;
                    (b.x - 2.0 * speed * dt * uy, b.y + 2.0 * speed * dt * ux)
                }
            };
            distractors.push(MaskGeom::new(x, y, b.radius, 1.0)?);
        }
        frames.push(GtFrame {
            t,
            objects,
            distractors,
        });
    }

    let n = embeddings.len();
    let mut pairwise = vec![vec![0.0; n]; n];
    let mut max_abs = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let c = embeddings[i].cosine(&embeddings[j]).abs();
            pairwise[i][j] = c;
            if i != j {
                max_abs = max_abs.max(c);
            }
        }
    }

    Ok(GroundTruth {
        header: GtHeader {
            seed: config.seed,
            world_width: w,
            world_height: h,
            identity_embeddings: embeddings,
            distractor_embeddings,
            metadata: GtMetadata {
                pairwise_abs_cos: pairwise,
                max_pairwise_abs_cos: max_abs,
            },
        },
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(
        kind: EventKind,
        target: usize,
        start: FrameIndex,
        end: FrameIndex,
        severity: f64,
    ) -> Event {
        Event {
            kind,
            target,
            start,
            end,
            severity,
        }
    }

    #[test]
    fn single_frame_single_identity() {
        let gt = generate(&ScenarioConfig::basic(1, 1, 3)).unwrap();
        assert_eq!(gt.frames.len(), 1);
        assert_eq!(gt.frames[0].objects.len(), 1);
        assert_eq!(gt.frames[0].objects[0].mask.visible_fraction(), 1.0);
    }

    #[test]
    fn exit_window_blanks_visibility() {
        let mut c = ScenarioConfig::basic(2, 10, 1);
        c.events.push(event(EventKind::ExitReentry, 0, 3, 7, 1.0));
        let gt = generate(&c).unwrap();
        let v = |t: usize| gt.frames[t].objects[0].mask.visible_fraction();
        for t in 3..7 {
            assert_eq!(v(t), 0.0);
        }
        assert_eq!(v(2), 1.0);
        assert_eq!(v(7), 1.0);
        assert!(gt
            .frames
            .iter()
            .all(|f| f.objects[1].mask.visible_fraction() == 1.0));
    }

    #[test]
    fn occlusion_scales_visibility() {
        let mut c = ScenarioConfig::basic(1, 10, 1);
        c.events.push(event(EventKind::Occlusion, 0, 2, 4, 0.8));
        let gt = generate(&c).unwrap();
        assert!((gt.frames[2].objects[0].mask.visible_fraction() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rapid_motion_speeds_up() {
        let mut c = ScenarioConfig::basic(1, 20, 5);
        c.world_width = 10_000.0;
        c.world_height = 10_000.0;
        let calm = generate(&c).unwrap();
        c.events.push(event(EventKind::RapidMotion, 0, 5, 6, 1.0));
        let fast = generate(&c).unwrap();
        let step = |gt: &GroundTruth, t: usize| {
            gt.frames[t + 1].objects[0]
                .mask
                .center_distance(&gt.frames[t].objects[0].mask)
        };
        assert!((step(&fast, 5) - 11.0 * step(&calm, 5)).abs() < 1e-9);
        assert!((step(&fast, 8) - step(&calm, 8)).abs() < 1e-9);
    }

    #[test]
    fn bad_window_is_rejected() {
        let mut c = ScenarioConfig::basic(2, 10, 1);
        c.events.push(event(EventKind::ExitReentry, 0, 7, 7, 1.0));
        assert!(matches!(
            generate(&c),
            Err(ScenarioError::InvalidWindow { index: 0, .. })
        ));
        c.events[0] = event(EventKind::ExitReentry, 0, 5, 11, 1.0);
        assert!(matches!(
            generate(&c),
            Err(ScenarioError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let mut c = ScenarioConfig::basic(4, 30, 11);
        c.distractors.push(DistractorSpec {
            target: 1,
            similarity: 0.9,
            motion: DistractorMotion::Crossing,
            crowding: 0.5,
        });
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        c.seed = 12;
        assert_ne!(
            generate(&c).unwrap(),
            generate(&ScenarioConfig {
                seed: 11,
                ..c.clone()
            })
            .unwrap()
        );
    }

    #[test]
    fn bodies_stay_inside_the_world() {
        let mut c = ScenarioConfig::basic(6, 200, 2);
        c.events
            .push(event(EventKind::RapidMotion, 0, 10, 150, 1.0));
        let gt = generate(&c).unwrap();
        for f in &gt.frames {
            for o in &f.objects {
                let m = o.mask;
                assert!(
                    m.center_x() >= m.radius() - 1e-9 && m.center_x() <= 100.0 - m.radius() + 1e-9
                );
                assert!(
                    m.center_y() >= m.radius() - 1e-9 && m.center_y() <= 100.0 - m.radius() + 1e-9
                );
            }
        }
    }

    #[test]
    fn distractor_embedding_has_requested_similarity() {
        let mut c = ScenarioConfig::basic(2, 5, 9);
        c.distractors.push(DistractorSpec {
            target: 1,
            similarity: 0.9,
            motion: DistractorMotion::Parallel,
            crowding: 1.0,
        });
        let gt = generate(&c).unwrap();
        let cos = gt.header.distractor_embeddings[0].cosine(&gt.header.identity_embeddings[1]);
        assert!((cos - 0.9).abs() < 1e-12);
    }

    #[test]
    fn metadata_reports_pairwise_similarity() {
        let gt = generate(&ScenarioConfig::basic(3, 2, 4)).unwrap();
        let m = &gt.header.metadata;
        assert_eq!(m.pairwise_abs_cos.len(), 3);
        assert!((m.pairwise_abs_cos[1][1] - 1.0).abs() < 1e-12);
        assert!(m.max_pairwise_abs_cos < 1.0);
    }
}
