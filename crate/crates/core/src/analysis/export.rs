use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::inpaint::RasterImage;
use crate::model::{BBox, Track, TrackId};

/// Source of pre-extracted frame rasters.
pub trait FrameStore: Sync {
    fn frame(&self, video_id: &str, frame_index: u64) -> Option<RasterImage>;
}

/// Frames stored as `<root>/<video_id>/<frame_index>.<ext>` where ext is
/// `ppm`, `png` or `jpg`.
#[derive(Debug, Clone)]
pub struct DirFrameStore {
    root: PathBuf,
}

impl DirFrameStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirFrameStore { root: root.into() }
    }
}

impl FrameStore for DirFrameStore {
    fn frame(&self, video_id: &str, frame_index: u64) -> Option<RasterImage> {
        ["ppm", "png", "jpg"].iter().find_map(|ext| {
            let path = self.root.join(video_id).join(format!("{frame_index}.{ext}"));
            path.is_file().then(|| RasterImage::load(&path).ok()).flatten()
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportReport {
    pub written: Vec<(String, TrackId, PathBuf)>,
    pub warnings: Vec<String>,
}

const BOX_COLOR: [u8; 3] = [255, 48, 48];
const BOX_THICKNESS: u32 = 3;

/// Draws a box outline in pixel space, clipped to the image.
pub fn draw_box(img: &mut RasterImage, bbox: &BBox, color: [u8; 3], thickness: u32) {
    if img.width == 0 || img.height == 0 {
        return;
    }
    let (w, h) = (img.width as f64, img.height as f64);
    let to_px = |v: f64, size: f64, max: u32| ((v * size).floor().max(0.0) as u32).min(max - 1);
    let x1 = to_px(bbox.x1, w, img.width);
    let x2 = to_px(bbox.x2, w, img.width);
    let y1 = to_px(bbox.y1, h, img.height);
    let y2 = to_px(bbox.y2, h, img.height);
    for y in y1..=y2 {
        for x in x1..=x2 {
            let on_edge = x < x1 + thickness || x + thickness > x2 || y < y1 + thickness || y + thickness > y2;
            if on_edge {
                img.set(x, y, color);
            }
        }
    }
}

/// Path of a track's representative image inside `tracks_dir`.
pub fn track_image_path(tracks_dir: &Path, video_id: &str, track_id: TrackId) -> PathBuf {
    tracks_dir.join(video_id).join(format!("{track_id}.jpg"))
}

/// Writes, for every track, the frame holding its highest-confidence
/// detection with that box drawn, to `tracks_dir/<video_id>/<track_id>.jpg`.
///
/// Tracks whose frame is unavailable are reported as warnings and skipped.
pub fn export_track_images(tracks: &[Track], frames: &dyn FrameStore, tracks_dir: &Path) -> Result<ExportReport> {
    let results: Vec<std::result::Result<(String, TrackId, PathBuf), String>> = tracks
        .par_iter()
        .map(|t| {
            let best = t.best_detection();
            let Some(mut img) = frames.frame(&best.video_id, best.frame_index) else {
                return Err(format!(
                    "{}: no frame raster for frame {} of track {}, image skipped",
                    best.video_id, best.frame_index, t.track_id
                ));
            };
            draw_box(&mut img, &best.bbox, BOX_COLOR, BOX_THICKNESS);
            let path = track_image_path(tracks_dir, &best.video_id, t.track_id);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
            }
            img.save(&path).map_err(|e| e.to_string())?;
            Ok((best.video_id.clone(), t.track_id, path))
        })
        .collect();

    let mut report = ExportReport::default();
    for r in results {
        match r {
            Ok(w) => report.written.push(w),
            Err(msg) => {
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
        }
    }
    Ok(report)
}
