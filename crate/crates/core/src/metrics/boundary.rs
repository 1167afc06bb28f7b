//! Boundary F-measure on rasterized disc masks.

use crate::types::MaskGeom;

use super::MetricsError;

pub const MIN_RESOLUTION: u32 = 64;
/// Boundary match tolerance as a fraction of the image diagonal.
pub const BOUNDARY_TOLERANCE: f64 = 0.008;

/// Pixel grid covering a `width x height` world; `resolution` pixels along
/// the longer side, square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Raster {
    scale: f64,
    cols: i64,
    rows: i64,
}

impl Raster {
    pub fn new(width: f64, height: f64, resolution: u32) -> Result<Self, MetricsError> {
        if resolution < MIN_RESOLUTION {
            return Err(MetricsError::ResolutionTooSmall(resolution));
        }
        let scale = resolution as f64 / width.max(height);
        Ok(Raster {
            scale,
            cols: ((width * scale).round() as i64).max(1),
            rows: ((height * scale).round() as i64).max(1),
        })
    }

    pub fn cols(&self) -> i64 {
        self.cols
    }

    pub fn rows(&self) -> i64 {
        self.rows
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn tolerance_px(&self) -> f64 {
        BOUNDARY_TOLERANCE * ((self.cols * self.cols + self.rows * self.rows) as f64).sqrt()
    }

    /// Pixel `(col, row)` belongs to the mask if its center lies strictly
    /// inside the disc. Any visible fraction draws the whole disc.
    pub fn covers(&self, mask: &MaskGeom, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col >= self.cols || row >= self.rows || mask.is_blank() {
            return false;
        }
        let x = (col as f64 + 0.5) / self.scale - mask.center_x();
        let y = (row as f64 + 0.5) / self.scale - mask.center_y();
        x * x + y * y < mask.radius() * mask.radius()
    }

    /// Mask pixels with at least one 4-neighbour outside the mask.
    pub fn boundary(&self, mask: &MaskGeom) -> Vec<(i64, i64)> {
        if mask.is_blank() {
            return Vec::new();
        }
        let lo = |c: f64| ((c - mask.radius()) * self.scale).floor() as i64 - 1;
        let hi = |c: f64| ((c + mask.radius()) * self.scale).ceil() as i64 + 1;
        let cols = lo(mask.center_x()).max(0)..=hi(mask.center_x()).min(self.cols - 1);
        let rows = lo(mask.center_y()).max(0)..=hi(mask.center_y()).min(self.rows - 1);
        let mut out = Vec::new();
        for row in rows {
            for col in cols.clone() {
                if self.covers(mask, col, row)
                    && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|(dc, dr)| !self.covers(mask, col + dc, row + dr))
                {
                    out.push((col, row));
                }
            }
        }
        out
    }
}

fn matched_fraction(from: &[(i64, i64)], to: &[(i64, i64)], tol: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let tol2 = tol * tol;
    let hits = from
        .iter()
        .filter(|(c, r)| {
            to.iter().any(|(c2, r2)| {
                let (dc, dr) = ((c - c2) as f64, (r - r2) as f64);
                dc * dc + dr * dr <= tol2
            })
        })
        .count();
    hits as f64 / from.len() as f64
}

/// Boundary F-measure of `pred` against `gt`: harmonic mean of the fraction
/// of predicted boundary pixels within tolerance of the true boundary and
/// vice versa. Two empty masks agree perfectly.
pub fn boundary_f(raster: &Raster, gt: &MaskGeom, pred: &MaskGeom) -> f64 {
    let b_gt = raster.boundary(gt);
    let b_pred = raster.boundary(pred);
    match (b_gt.is_empty(), b_pred.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let tol = raster.tolerance_px();
    let precision = matched_fraction(&b_pred, &b_gt, tol);
    let recall = matched_fraction(&b_gt, &b_pred, tol);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(x: f64, y: f64, r: f64) -> MaskGeom {
        MaskGeom::new(x, y, r, 1.0).unwrap()
    }

    #[test]
    fn identical_masks_score_one() {
        let r = Raster::new(100.0, 100.0, 256).unwrap();
        assert_eq!(
            boundary_f(&r, &disc(40.0, 50.0, 5.0), &disc(40.0, 50.0, 5.0)),
            1.0
        );
    }

    #[test]
    fn distant_masks_score_zero() {
        let r = Raster::new(100.0, 100.0, 256).unwrap();
        assert_eq!(
            boundary_f(&r, &disc(20.0, 20.0, 5.0), &disc(80.0, 80.0, 5.0)),
            0.0
        );
    }

    #[test]
    fn low_resolution_rejected() {
        assert!(matches!(
            Raster::new(100.0, 100.0, 63),
            Err(MetricsError::ResolutionTooSmall(63))
        ));
    }

    #[test]
    fn boundary_is_a_closed_ring() {
        let r = Raster::new(100.0, 100.0, 512).unwrap();
        let ring = r.boundary(&disc(50.0, 50.0, 10.0));
        // 4-connected boundary of a digital disc of radius ~51 px.
        assert!(ring.len() > 280 && ring.len() < 440, "{}", ring.len());
    }

    #[test]
    fn clipped_disc_has_boundary_along_the_edge() {
        let r = Raster::new(100.0, 100.0, 128).unwrap();
        let b = r.boundary(&disc(0.0, 50.0, 10.0));
        assert!(b.iter().any(|&(c, _)| c == 0));
    }

    #[test]
    fn converges_with_resolution() {
        let a = disc(30.0, 40.0, 6.0);
        let b = disc(31.0, 40.5, 5.5);
        let f = |res| boundary_f(&Raster::new(100.0, 100.0, res).unwrap(), &a, &b);
        assert!((f(512) - f(1024)).abs() < 1e-2);
    }
}
