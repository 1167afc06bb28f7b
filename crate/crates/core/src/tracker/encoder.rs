//! Synthetic memory encoder.
//!
//! A stored feature is the observed appearance blended with background noise
//! in proportion to how much of the object is visible:
//! `normalize(v * e + (1 - v) * n)`. A blank mask (`v = 0`) therefore
//! produces a feature that carries no identity information at all.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::types::{FeatureVec, Observation, Slot};

/// Noise stream for the `ordinal`-th track created on `slot`.
///
/// Streams depend only on `(seed, slot, ordinal)`, never on other tracks, so
/// a target produces the same draws whether it is tracked alone or together
/// with others.
pub fn track_noise_rng(seed: u64, slot: Slot, ordinal: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(slot) << 32) | u64::from(ordinal));
    rng
}

/// Uniformly distributed unit vector of dimension `dim`.
pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> FeatureVec {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(unit) = FeatureVec::normalized(v) {
            return unit;
        }
    }
}

/// Encodes `obs` into a `(feature, pointer)` pair. Exactly one noise vector
/// is drawn per call regardless of visibility.
pub fn encode_feature<R: Rng + ?Sized>(
    obs: &Observation,
    pointer_dim: usize,
    rng: &mut R,
) -> (FeatureVec, FeatureVec) {
    let e = &obs.embedding;
    let noise = random_unit(e.dim(), rng);
    let v = obs.mask.visible_fraction();
    let feature = if v >= 1.0 {
        e.clone()
    } else {
        let mixed: Vec<f64> = e
            .components()
            .iter()
            .zip(noise.components())
            .map(|(a, b)| v * a + (1.0 - v) * b)
            .collect();
        FeatureVec::normalized(mixed).unwrap_or(noise)
    };
    let head = pointer_dim.clamp(1, feature.dim());
    let pointer = FeatureVec::normalized(feature.components()[..head].to_vec())
        .unwrap_or_else(|_| FeatureVec::basis(head, 0));
    (feature, pointer)
}
