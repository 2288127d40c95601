use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VideoMeta;

pub const DEFAULT_FPS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledFrame {
    pub frame_index: u64,
    pub time_ms: i64,
}

/// Which instants of a video get sent to the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub video: VideoMeta,
    pub fps: f64,
    pub frames: Vec<SampledFrame>,
}

impl SamplingSchedule {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time_ms(&self, frame_index: u64) -> Option<i64> {
        self.frames.get(frame_index as usize).map(|f| f.time_ms)
    }
}

/// Milliseconds of sample `index`, rounded to nearest with ties away from zero.
pub fn sample_time_ms(index: u64, fps: f64) -> i64 {
    (index as f64 * 1000.0 / fps).round() as i64
}

/// Samples `t = i / fps` for every `i` with `t < duration`.
pub fn build_schedule(video: &VideoMeta, fps: f64) -> Result<SamplingSchedule> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    video.validate()?;
    // compare i * 1000 < duration_ms * fps to avoid dividing before the test
    let limit = video.duration_ms as f64 * fps;
    let mut frames = Vec::new();
    let mut i: u64 = 0;
    while (i as f64) * 1000.0 < limit {
        frames.push(SampledFrame {
            frame_index: i,
            time_ms: sample_time_ms(i, fps),
        });
        i += 1;
    }
    Ok(SamplingSchedule {
        video: video.clone(),
        fps,
        frames,
    })
}
