//! Binary PPM frame dumps: ground truth as outlines, predictions as filled
//! discs colored by track id.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::{MetricsError, Raster, MIN_RESOLUTION};
use crate::record::RunRecord;
use crate::scenario::GroundTruth;
use crate::types::MaskGeom;

pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];
const BACKGROUND: [u8; 3] = [255, 255, 255];
const OUTLINE: [u8; 3] = [0, 0, 0];
/// Outline thickness in pixels.
const OUTLINE_WIDTH: f64 = 1.5;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    ResolutionTooSmall(u32),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    fn blank(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        out.write_all(&bytes)
    }

    /// Pixels whose center distance to the disc center satisfies `keep`,
    /// distances in pixels.
    fn paint(
        &mut self,
        raster: &Raster,
        mask: &MaskGeom,
        color: [u8; 3],
        keep: impl Fn(f64, f64) -> bool,
    ) {
        let s = raster.scale();
        let (cx, cy, r) = (mask.center_x() * s, mask.center_y() * s, mask.radius() * s);
        let lo = |c: f64| ((c - r - 1.0).floor() as i64).max(0);
        let hi = |c: f64, n: usize| ((c + r + 1.0).ceil() as i64).min(n as i64 - 1);
        for row in lo(cy)..=hi(cy, self.height) {
            for col in lo(cx)..=hi(cx, self.width) {
                let dx = col as f64 + 0.5 - cx;
                let dy = row as f64 + 0.5 - cy;
                if keep((dx * dx + dy * dy).sqrt(), r) {
                    self.pixels[row as usize * self.width + col as usize] = color;
                }
            }
        }
    }
}

pub fn track_color(track_id: u64) -> [u8; 3] {
    PALETTE[(track_id % PALETTE.len() as u64) as usize]
}

/// Draws frame `index` of the run over its ground truth.
pub fn render_frame(
    run: &RunRecord,
    gt: &GroundTruth,
    index: usize,
    resolution: u32,
) -> Result<Image, RenderError> {
    if resolution < MIN_RESOLUTION {
        return Err(RenderError::ResolutionTooSmall(resolution));
    }
    let raster = Raster::new(gt.header.world_width, gt.header.world_height, resolution)?;
    let mut img = Image::blank(raster.cols() as usize, raster.rows() as usize);
    if let Some(frame) = run.frames.get(index) {
        for o in frame.outputs.iter().filter(|o| !o.mask.is_blank()) {
            img.paint(&raster, &o.mask, track_color(o.track_id), |d, r| d < r);
        }
    }
    if let Some(frame) = gt.frames.get(index) {
        for o in frame.objects.iter().filter(|o| !o.mask.is_blank()) {
            img.paint(&raster, &o.mask, OUTLINE, |d, r| {
                d < r && d >= r - OUTLINE_WIDTH
            });
        }
    }
    Ok(img)
}

/// Writes `frame_NNNN.ppm` for every frame of the longer of run and ground
/// truth into `outdir`, creating it if needed.
pub fn render_run(
    run: &RunRecord,
    gt: &GroundTruth,
    outdir: &Path,
    resolution: u32,
) -> Result<Vec<PathBuf>, RenderError> {
    if resolution < MIN_RESOLUTION {
        return Err(RenderError::ResolutionTooSmall(resolution));
    }
    fs::create_dir_all(outdir)?;
    let n = run.frames.len().max(gt.frames.len());
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let img = render_frame(run, gt, i, resolution)?;
        let path = outdir.join(format!("frame_{i:04}.ppm"));
        let mut file = io::BufWriter::new(fs::File::create(&path)?);
        img.write_ppm(&mut file)?;
        file.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiment::simulate_with_manifest;
    use crate::record::RunManifest;
    use crate::scenario::ScenarioConfig;
    use crate::tracker::TrackerConfig;

    fn sim() -> (RunRecord, GroundTruth) {
        let config = ExperimentConfig {
            scenario: ScenarioConfig::basic(3, 4, 5),
            tracker: TrackerConfig::default(),
        };
        let s = simulate_with_manifest(&config, RunManifest::default()).unwrap();
        (s.run, s.ground_truth)
    }

    #[test]
    fn header_and_size() {
        let (run, gt) = sim();
        let img = render_frame(&run, &gt, 0, 64).unwrap();
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n64 64\n255\n"));
        assert_eq!(buf.len(), "P6\n64 64\n255\n".len() + 64 * 64 * 3);
    }

    #[test]
    fn predictions_use_palette_and_outlines_are_black() {
        let (run, gt) = sim();
        let img = render_frame(&run, &gt, 1, 256).unwrap();
        assert!(img.pixels.contains(&OUTLINE));
        let id = run.frames[1].outputs[0].track_id;
        assert!(img.pixels.contains(&track_color(id)));
    }

    #[test]
    fn one_file_per_frame_and_deterministic() {
        let (run, gt) = sim();
        let dir = tempfile::tempdir().unwrap();
        let a = render_run(&run, &gt, &dir.path().join("a"), 64).unwrap();
        let b = render_run(&run, &gt, &dir.path().join("b"), 64).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a[0].ends_with("frame_0000.ppm"));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn low_resolution_rejected() {
        let (run, gt) = sim();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            render_run(&run, &gt, dir.path(), 32),
            Err(RenderError::ResolutionTooSmall(32))
        ));
    }
}
