//! Turns per-frame detections from stationary underwater video into
//! species-specific MaxN counts: sampling, tracking, false-positive track
//! filtering, expert review, and the evaluation harness around them.

pub mod analysis;
pub mod error;
pub mod ingest;
pub mod inpaint;
pub mod metrics;
pub mod model;
pub mod postfilter;
pub mod run;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{iou, track_max_center_displacement, track_span_s, BBox, Detection, SpeciesLabel, Track, TrackId, TrackStatus, VideoMeta};
