//! Sampling schedules and per-frame detection streams.

mod detfile;
mod schedule;
mod synth;

pub use detfile::{
    load_detection_file, read_detections, write_detection_file, write_detections, DEFAULT_CONF_THRESHOLD,
    DETECTION_HEADER,
};
pub use schedule::{build_schedule, sample_time_ms, SampledFrame, SamplingSchedule, DEFAULT_FPS};
pub use synth::{actors_present, synthesize, Actor, Clutter, ScenarioSpec, Synthesized, SyntheticBackend};

use crate::model::{BBox, Detection};

/// Detections grouped by sampled frame; index `i` holds frame `i`.
pub type FrameDetections = Vec<Vec<Detection>>;

/// Anything that can produce boxes for a sampled frame: the file reader,
/// the scenario generator, or an adapter around an external model runner.
///
/// Implementations must be deterministic for a fixed instance and input.
pub trait DetectorBackend {
    fn detect(&self, video_id: &str, frame_index: u64, time_ms: i64) -> Vec<(BBox, f64)>;
}

/// Backend over detections that were already computed, e.g. loaded from a file.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedBackend {
    frames: FrameDetections,
}

impl PrecomputedBackend {
    pub fn new(frames: FrameDetections) -> Self {
        PrecomputedBackend { frames }
    }
}

impl DetectorBackend for PrecomputedBackend {
    fn detect(&self, video_id: &str, frame_index: u64, _time_ms: i64) -> Vec<(BBox, f64)> {
        self.frames
            .get(frame_index as usize)
            .into_iter()
            .flatten()
            .filter(|d| d.video_id == video_id)
            .map(|d| (d.bbox, d.confidence))
            .collect()
    }
}

/// Runs a backend over every scheduled frame, keeping boxes with
/// `confidence >= conf_threshold`.
pub fn collect_frames(
    backend: &dyn DetectorBackend,
    schedule: &SamplingSchedule,
    conf_threshold: f64,
) -> FrameDetections {
    let video_id = &schedule.video.video_id;
    schedule
        .frames
        .iter()
        .map(|f| {
            backend
                .detect(video_id, f.frame_index, f.time_ms)
                .into_iter()
                .filter(|(_, c)| *c >= conf_threshold)
                .map(|(bbox, confidence)| Detection {
                    video_id: video_id.clone(),
                    frame_index: f.frame_index,
                    time_ms: f.time_ms,
                    bbox,
                    confidence,
                })
                .collect()
        })
        .collect()
}
