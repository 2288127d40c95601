use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DEFAULT_CONF_THRESHOLD, DEFAULT_FPS};
use crate::postfilter::PostFilterConfig;
use crate::tracker::TrackerConfig;

/// Everything that shapes a run's output. Loaded from TOML; every key is
/// optional:
///
/// ```toml
/// fps = 3.0
/// conf_threshold = 0.2
///
/// [tracker]
/// high_conf_thresh = 0.5
/// lost_buffer_frames = 9
///
/// [postfilter]
/// min_span_s = 1.0
/// min_displacement = 0.0008
/// keep_conf = 0.7
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fps: f64,
    pub conf_threshold: f64,
    pub tracker: TrackerConfig,
    pub postfilter: PostFilterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fps: DEFAULT_FPS,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            tracker: TrackerConfig::default(),
            postfilter: PostFilterConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::Config(format!("conf_threshold {} outside [0,1]", self.conf_threshold)));
        }
        self.tracker.validate()?;
        self.postfilter.validate()
    }

    /// Overrides one parameter by its key name. Tracker and post-filter keys
    /// may be given bare (`lost_buffer_frames`) or qualified
    /// (`tracker.lost_buffer_frames`).
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let name = key
            .strip_prefix("tracker.")
            .or_else(|| key.strip_prefix("postfilter."))
            .unwrap_or(key);
        let t = &mut self.tracker;
        let p = &mut self.postfilter;
        match name {
            "fps" => self.fps = value,
            "conf_threshold" => self.conf_threshold = value,
            "high_conf_thresh" => t.high_conf_thresh = value,
            "low_conf_floor" => t.low_conf_floor = value,
            "match_iou_stage1" => t.match_iou_stage1 = value,
            "match_iou_stage2" => t.match_iou_stage2 = value,
            "new_track_thresh" => t.new_track_thresh = value,
            "lost_buffer_frames" => {
                if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                    return Err(Error::Config(format!("lost_buffer_frames must be a non-negative integer, got {value}")));
                }
                t.lost_buffer_frames = value as u32;
            }
            "position_noise_scale" => t.position_noise_scale = value,
            "velocity_noise_scale" => t.velocity_noise_scale = value,
            "min_span_s" => p.min_span_s = value,
            "min_displacement" => p.min_displacement = value,
            "keep_conf" => p.keep_conf = value,
            _ => return Err(Error::Config(format!("unknown parameter {key:?}"))),
        }
        Ok(())
    }

    /// Copy with every `(key, value)` applied, validated.
    pub fn with_params<'a>(&self, params: impl IntoIterator<Item = &'a (String, f64)>) -> Result<Self> {
        let mut cfg = *self;
        for (k, v) in params {
            cfg.set(k, *v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
