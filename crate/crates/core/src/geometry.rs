//! Exact disc geometry.

use std::f64::consts::PI;

use crate::types::MaskGeom;

pub fn disc_area(radius: f64) -> f64 {
    PI * radius * radius
}

/// Area of the intersection of two discs (the lens). Symmetric in its
/// arguments bit-for-bit: radii are put in canonical order first.
pub fn disc_intersection_area(a: &MaskGeom, b: &MaskGeom) -> f64 {
    let (small, large) = if a.radius() <= b.radius() {
        (a.radius(), b.radius())
    } else {
        (b.radius(), a.radius())
    };
    let d = a.center_distance(b);
    if d >= small + large {
        return 0.0;
    }
    if d <= large - small {
        return disc_area(small);
    }
    let cos_small = ((d * d + small * small - large * large) / (2.0 * d * small)).clamp(-1.0, 1.0);
    let cos_large = ((d * d + large * large - small * small) / (2.0 * d * large)).clamp(-1.0, 1.0);
    let kite =
        (-d + small + large) * (d + small - large) * (d - small + large) * (d + small + large);
    let area = small * small * cos_small.acos() + large * large * cos_large.acos()
        - 0.5 * kite.max(0.0).sqrt();
    area.clamp(0.0, disc_area(small))
}

/// Fraction of `target`'s full disc covered by `other`'s full disc.
pub fn coverage(target: &MaskGeom, other: &MaskGeom) -> f64 {
    (disc_intersection_area(target, other) / disc_area(target.radius())).clamp(0.0, 1.0)
}

/// Intersection-over-union of two disc masks.
///
/// A partially visible disc is modeled as the same disc thinned by its
/// visible fraction, with both masks thinned by a common occluder: the
/// intersection is the lens scaled by `min(v_a, v_b)` and each mask's area
/// by its own fraction. Blank masks have IoU 0 with everything.
pub fn iou(a: &MaskGeom, b: &MaskGeom) -> f64 {
    let shared = a.visible_fraction().min(b.visible_fraction());
    if shared == 0.0 {
        return 0.0;
    }
    let inter = shared * disc_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.visible_fraction() * disc_area(a.radius())
        + b.visible_fraction() * disc_area(b.radius())
        - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc(x: f64, y: f64, r: f64, v: f64) -> MaskGeom {
        MaskGeom::new(x, y, r, v).unwrap()
    }

    #[test]
    fn identical_discs_have_unit_iou() {
        let a = disc(3.0, 4.0, 2.5, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        let partial = disc(3.0, 4.0, 2.5, 0.3);
        assert_eq!(iou(&partial, &partial), 1.0);
    }

    #[test]
    fn disjoint_discs_have_zero_iou() {
        assert_eq!(
            iou(&disc(0.0, 0.0, 1.0, 1.0), &disc(2.5, 0.0, 1.0, 1.0)),
            0.0
        );
        assert_eq!(
            iou(&disc(0.0, 0.0, 1.0, 1.0), &disc(2.0, 0.0, 1.0, 1.0)),
            0.0
        );
    }

    #[test]
    fn blank_masks_never_overlap() {
        assert_eq!(
            iou(&disc(0.0, 0.0, 1.0, 0.0), &disc(0.0, 0.0, 1.0, 1.0)),
            0.0
        );
    }

    #[test]
    fn unit_discs_at_distance_one() {
        // Lens of two unit circles at distance 1: 2*pi/3 - sqrt(3)/2.
        let lens = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        let got = disc_intersection_area(&disc(0.0, 0.0, 1.0, 1.0), &disc(1.0, 0.0, 1.0, 1.0));
        assert!((got - lens).abs() < 1e-12);
        let expected = lens / (2.0 * PI - lens);
        assert!(
            (iou(&disc(0.0, 0.0, 1.0, 1.0), &disc(1.0, 0.0, 1.0, 1.0)) - expected).abs() < 1e-12
        );
    }

    #[test]
    fn contained_disc() {
        let big = disc(0.0, 0.0, 2.0, 1.0);
        let small = disc(0.5, 0.0, 1.0, 1.0);
        assert!((iou(&big, &small) - 0.25).abs() < 1e-12);
        assert!((coverage(&small, &big) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64, ar in 0.1..5.0f64, av in 0.0..=1.0f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64, br in 0.1..5.0f64, bv in 0.0..=1.0f64,
        ) {
            let a = disc(ax, ay, ar, av);
            let b = disc(bx, by, br, bv);
            let ab = iou(&a, &b);
            prop_assert_eq!(ab.to_bits(), iou(&b, &a).to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
