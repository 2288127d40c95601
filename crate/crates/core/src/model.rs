//! Shared domain types and the geometry every stage relies on.
//!
//! Boxes live in frame-normalized coordinates: `(0, 0)` is the top-left
//! corner, `(1, 1)` the bottom-right, x grows right and y grows down.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Validating constructor: `x1 < x2`, `y1 < y2`, everything in `[0, 1]`.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate().map(|_| b).map_err(Error::InvalidArgument)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(format!("coordinates {coords:?} outside [0,1]"));
        }
        if self.x1 >= self.x2 {
            return Err(format!("x1 {} must be < x2 {}", self.x1, self.x2));
        }
        if self.y1 >= self.y2 {
            return Err(format!("y1 {} must be < y2 {}", self.y1, self.y2));
        }
        Ok(())
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            x1: cx - w / 2.0,
            y1: cy - h / 2.0,
            x2: cx + w / 2.0,
            y2: cy + h / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Intersection over union. Boxes that only touch along an edge score 0.
///
/// Degenerate boxes (zero or negative extent, which Kalman predictions can
/// produce) are treated as empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One detector output on one sampled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub frame_index: u64,
    pub time_ms: i64,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Lowercase species identifier such as `carcharhinus_perezi`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpeciesLabel(String);

pub const UNCLASSIFIED: &str = "unclassified";

impl SpeciesLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let ok = !name.is_empty()
            && name
                .bytes()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == b'_');
        if ok {
            Ok(SpeciesLabel(name))
        } else {
            Err(Error::SpeciesLabel(name))
        }
    }

    /// Pseudo-species carried by kept tracks nobody has annotated.
    pub fn unclassified() -> Self {
        SpeciesLabel(UNCLASSIFIED.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SpeciesLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for SpeciesLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        SpeciesLabel::new(s)
    }
}

impl From<SpeciesLabel> for String {
    fn from(s: SpeciesLabel) -> String {
        s.0
    }
}

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Active,
    Lost,
    Finished,
}

/// Identity-consistent sequence of detections of one animal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: TrackId,
    pub detections: Vec<Detection>,
    pub status: TrackStatus,
    pub label: Option<SpeciesLabel>,
    pub rejected: bool,
}

impl Track {
    pub fn new(track_id: TrackId, first: Detection) -> Self {
        Track {
            track_id,
            detections: vec![first],
            status: TrackStatus::Active,
            label: None,
            rejected: false,
        }
    }

    pub fn video_id(&self) -> &str {
        &self.detections[0].video_id
    }

    pub fn first(&self) -> &Detection {
        &self.detections[0]
    }

    pub fn last(&self) -> &Detection {
        self.detections.last().expect("track has at least one detection")
    }

    pub fn max_confidence(&self) -> f64 {
        self.detections
            .iter()
            .map(|d| d.confidence)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-confidence detection; the earliest one wins ties.
    pub fn best_detection(&self) -> &Detection {
        let mut best = &self.detections[0];
        for d in &self.detections[1..] {
            if d.confidence > best.confidence {
                best = d;
            }
        }
        best
    }

    /// Checks ordering, shared video and label/rejection consistency.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.detections.is_empty() {
            return Err(format!("track {} has no detections", self.track_id));
        }
        let video = self.video_id();
        for w in self.detections.windows(2) {
            if w[1].frame_index <= w[0].frame_index {
                return Err(format!(
                    "track {}: frame {} does not follow frame {}",
                    self.track_id, w[1].frame_index, w[0].frame_index
                ));
            }
        }
        if self.detections.iter().any(|d| d.video_id != video) {
            return Err(format!("track {} mixes videos", self.track_id));
        }
        if self.rejected && self.label.is_some() {
            return Err(format!("track {} is rejected but labeled", self.track_id));
        }
        Ok(())
    }
}

/// Seconds between the first and last detection of a track.
pub fn track_span_s(track: &Track) -> f64 {
    (track.last().time_ms - track.first().time_ms) as f64 / 1000.0
}

/// Largest distance between any detection's box center and the first one's.
pub fn track_max_center_displacement(track: &Track) -> f64 {
    let (fx, fy) = track.first().bbox.center();
    track
        .detections
        .iter()
        .map(|d| {
            let (cx, cy) = d.bbox.center();
            (cx - fx).hypot(cy - fy)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_ms: i64,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
}

impl VideoMeta {
    pub fn new(
        video_id: impl Into<String>,
        duration_ms: i64,
        frame_width_px: u32,
        frame_height_px: u32,
    ) -> Result<Self> {
        let meta = VideoMeta {
            video_id: video_id.into(),
            duration_ms,
            frame_width_px,
            frame_height_px,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() || self.video_id.contains(['/', '\\', ',']) {
            return Err(Error::InvalidArgument(format!(
                "video id {:?} must be non-empty without '/', '\\' or ','",
                self.video_id
            )));
        }
        if self.duration_ms < 0 {
            return Err(Error::InvalidArgument(format!(
                "duration_ms {} is negative",
                self.duration_ms
            )));
        }
        if self.frame_width_px == 0 || self.frame_height_px == 0 {
            return Err(Error::InvalidArgument("frame dimensions must be positive".into()));
        }
        Ok(())
    }
}
