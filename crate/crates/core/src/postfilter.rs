//! False-positive track removal.
//!
//! A track is a suspect when it is short (`span < min_span_s`) or barely
//! moves (`max center displacement < min_displacement`). Suspects whose best
//! detection confidence is below `keep_conf` are removed. All comparisons
//! are strict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{track_max_center_displacement, track_span_s, Track};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostFilterConfig {
    pub min_span_s: f64,
    /// Normalized frame units (frame width = height = 1).
    pub min_displacement: f64,
    pub keep_conf: f64,
}

impl Default for PostFilterConfig {
    fn default() -> Self {
        PostFilterConfig {
            min_span_s: 1.0,
            min_displacement: 0.0008,
            keep_conf: 0.7,
        }
    }
}

impl PostFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_span_s >= 0.0 && self.min_displacement >= 0.0 && (0.0..=1.0).contains(&self.keep_conf)) {
            return Err(Error::Config(format!(
                "post-filter thresholds must be >= 0 with keep_conf <= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn is_suspect(track: &Track, cfg: &PostFilterConfig) -> bool {
    track_span_s(track) < cfg.min_span_s || track_max_center_displacement(track) < cfg.min_displacement
}

pub fn select_suspects<'a>(tracks: &'a [Track], cfg: &PostFilterConfig) -> Vec<&'a Track> {
    tracks.iter().filter(|t| is_suspect(t, cfg)).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Track>,
    pub removed: Vec<Track>,
}

/// Partitions tracks into kept and removed, preserving input order in both.
pub fn apply(tracks: Vec<Track>, cfg: &PostFilterConfig) -> FilterOutcome {
    let (removed, kept) = tracks
        .into_iter()
        .partition(|t| is_suspect(t, cfg) && t.max_confidence() < cfg.keep_conf);
    FilterOutcome { kept, removed }
}
