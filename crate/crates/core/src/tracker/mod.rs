//! Tracking-by-detection: Kalman prediction, two-stage IoU association with
//! optimal assignment, and track lifecycle management.
//!
//! Association runs in two passes. High-confidence detections are matched
//! first against every live track (active and lost). Remaining
//! lower-confidence detections then get a chance to extend the tracks that
//! are still unmatched, under a stricter overlap gate. Tracks that go
//! unmatched for more than `lost_buffer_frames` consecutive frames are
//! finished and their id is never reused; an animal that comes back later
//! starts a new track.

pub mod assignment;
mod kalman;
mod output;

pub use kalman::{KalmanFilter, KalmanState, Matrix4, Matrix8, Vector4, Vector8};
pub use output::{read_tracked_detections, tracks_from_rows, write_tracked_detections, TrackedRow, TRACKED_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameDetections;
use crate::model::{iou, BBox, Detection, Track, TrackId, TrackStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub high_conf_thresh: f64,
    pub low_conf_floor: f64,
    pub match_iou_stage1: f64,
    pub match_iou_stage2: f64,
    pub new_track_thresh: f64,
    pub lost_buffer_frames: u32,
    pub position_noise_scale: f64,
    pub velocity_noise_scale: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            high_conf_thresh: 0.5,
            low_conf_floor: 0.2,
            match_iou_stage1: 0.3,
            match_iou_stage2: 0.5,
            new_track_thresh: 0.6,
            lost_buffer_frames: 9,
            position_noise_scale: 1.0 / 20.0,
            velocity_noise_scale: 1.0 / 160.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("high_conf_thresh", self.high_conf_thresh),
            ("low_conf_floor", self.low_conf_floor),
            ("match_iou_stage1", self.match_iou_stage1),
            ("match_iou_stage2", self.match_iou_stage2),
            ("new_track_thresh", self.new_track_thresh),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        if self.low_conf_floor > self.high_conf_thresh {
            return Err(Error::Config(format!(
                "low_conf_floor {} exceeds high_conf_thresh {}",
                self.low_conf_floor, self.high_conf_thresh
            )));
        }
        if !(self.position_noise_scale >= 0.0 && self.velocity_noise_scale >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn filter(&self) -> KalmanFilter {
        KalmanFilter {
            position_noise_scale: self.position_noise_scale,
            velocity_noise_scale: self.velocity_noise_scale,
        }
    }
}

/// A live track's predicted box, as seen by the association step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedTrack {
    pub track_id: TrackId,
    pub bbox: BBox,
}

/// Result of associating one frame; indices point into the inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

fn match_stage(
    tracks: &[PredictedTrack],
    track_idx: &[usize],
    detections: &[Detection],
    det_idx: &[usize],
    min_iou: f64,
) -> Vec<(usize, usize)> {
    if track_idx.is_empty() || det_idx.is_empty() {
        return Vec::new();
    }
    let ious: Vec<Vec<f64>> = track_idx
        .iter()
        .map(|&t| det_idx.iter().map(|&d| iou(&tracks[t].bbox, &detections[d].bbox)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = ious.iter().map(|r| r.iter().map(|v| 1.0 - v).collect()).collect();
    assignment::solve_gated(&cost, |i, j| ious[i][j] >= min_iou)
        .into_iter()
        .map(|(i, j)| (track_idx[i], det_idx[j]))
        .collect()
}

/// Two-stage association of predicted tracks with one frame's detections.
///
/// Detections below `low_conf_floor` never match. Each track and each
/// detection appears in at most one match. `matches` is sorted by track index.
pub fn associate(tracks: &[PredictedTrack], detections: &[Detection], cfg: &TrackerConfig) -> Association {
    let high: Vec<usize> = (0..detections.len())
        .filter(|&d| detections[d].confidence >= cfg.high_conf_thresh)
        .collect();
    let low: Vec<usize> = (0..detections.len())
        .filter(|&d| {
            let c = detections[d].confidence;
            c >= cfg.low_conf_floor && c < cfg.high_conf_thresh
        })
        .collect();
    let all_tracks: Vec<usize> = (0..tracks.len()).collect();

    let mut matches = match_stage(tracks, &all_tracks, detections, &high, cfg.match_iou_stage1);
    let mut track_used = vec![false; tracks.len()];
    for &(t, _) in &matches {
        track_used[t] = true;
    }
    let remaining: Vec<usize> = all_tracks.into_iter().filter(|&t| !track_used[t]).collect();
    let second = match_stage(tracks, &remaining, detections, &low, cfg.match_iou_stage2);
    for &(t, _) in &second {
        track_used[t] = true;
    }
    matches.extend(second);
    matches.sort_unstable();

    let mut det_used = vec![false; detections.len()];
    for &(_, d) in &matches {
        det_used[d] = true;
    }
    Association {
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_used[t]).collect(),
        unmatched_detections: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
        matches,
    }
}

/// Hook for global camera-motion compensation applied to predicted states.
///
/// Stationary cameras need none, which is what [`NoMotion`] does.
pub trait MotionCompensation: Send + Sync {
    fn compensate(&self, frame_index: u64, state: &mut KalmanState);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoMotion;

impl MotionCompensation for NoMotion {
    fn compensate(&self, _frame_index: u64, _state: &mut KalmanState) {}
}

#[derive(Debug, Clone)]
struct LiveTrack {
    track: Track,
    kalman: KalmanState,
    misses: u32,
}

/// Per-video tracker. Feed frames in increasing `frame_index` order.
pub struct TrackerState {
    config: TrackerConfig,
    filter: KalmanFilter,
    motion: Box<dyn MotionCompensation>,
    active: Vec<LiveTrack>,
    lost: Vec<LiveTrack>,
    finished: Vec<Track>,
    next_id: TrackId,
    last_frame: Option<u64>,
}

impl std::fmt::Debug for TrackerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrackerState")
            .field("config", &self.config)
            .field("active", &self.active_ids())
            .field("lost", &self.lost_ids())
            .field("finished", &self.finished.len())
            .field("next_id", &self.next_id)
            .field("last_frame", &self.last_frame)
            .finish()
    }
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrackerState {
            filter: config.filter(),
            config,
            motion: Box::new(NoMotion),
            active: Vec::new(),
            lost: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn with_motion_compensation(mut self, motion: Box<dyn MotionCompensation>) -> Self {
        self.motion = motion;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn active_ids(&self) -> Vec<TrackId> {
        self.active.iter().map(|t| t.track.track_id).collect()
    }

    pub fn lost_ids(&self) -> Vec<TrackId> {
        self.lost.iter().map(|t| t.track.track_id).collect()
    }

    /// `(track_id, consecutive misses)` for lost tracks.
    pub fn lost_counters(&self) -> Vec<(TrackId, u32)> {
        self.lost.iter().map(|t| (t.track.track_id, t.misses)).collect()
    }

    pub fn finished(&self) -> &[Track] {
        &self.finished
    }

    pub fn next_id(&self) -> TrackId {
        self.next_id
    }

    /// Processes one frame and returns, per input detection, the track it
    /// was assigned to (`None` when discarded).
    pub fn step(&mut self, frame_index: u64, detections: &[Detection]) -> Result<Vec<Option<TrackId>>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::Sequencing { last, got: frame_index });
            }
        }
        self.last_frame = Some(frame_index);

        let mut live: Vec<LiveTrack> = self.active.drain(..).chain(self.lost.drain(..)).collect();
        live.sort_by_key(|t| t.track.track_id);
        for t in &mut live {
            if t.misses > 0 {
                // no size drift while unobserved
                t.kalman.mean[6] = 0.0;
                t.kalman.mean[7] = 0.0;
            }
            t.kalman = self.filter.predict(&t.kalman);
            self.motion.compensate(frame_index, &mut t.kalman);
        }

        let predicted: Vec<PredictedTrack> = live
            .iter()
            .map(|t| PredictedTrack {
                track_id: t.track.track_id,
                bbox: t.kalman.bbox(),
            })
            .collect();
        let assoc = associate(&predicted, detections, &self.config);

        let mut assigned = vec![None; detections.len()];
        let mut matched = vec![false; live.len()];
        for &(ti, di) in &assoc.matches {
            let t = &mut live[ti];
            let det = &detections[di];
            t.kalman = self.filter.update(&t.kalman, &det.bbox);
            t.track.detections.push(det.clone());
            t.track.status = TrackStatus::Active;
            t.misses = 0;
            matched[ti] = true;
            assigned[di] = Some(t.track.track_id);
        }

        for (t, was_matched) in live.into_iter().zip(matched) {
            if was_matched {
                self.active.push(t);
                continue;
            }
            let mut t = t;
            t.misses += 1;
            if t.misses > self.config.lost_buffer_frames {
                t.track.status = TrackStatus::Finished;
                self.finished.push(t.track);
            } else {
                t.track.status = TrackStatus::Lost;
                self.lost.push(t);
            }
        }

        for &di in &assoc.unmatched_detections {
            let det = &detections[di];
            if det.confidence < self.config.new_track_thresh {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.active.push(LiveTrack {
                kalman: self.filter.initiate(&det.bbox),
                track: Track::new(id, det.clone()),
                misses: 0,
            });
            assigned[di] = Some(id);
        }
        Ok(assigned)
    }

    /// Finishes every live track and returns all tracks ordered by id.
    pub fn finish(mut self) -> Vec<Track> {
        for t in self.active.drain(..).chain(self.lost.drain(..)) {
            let mut track = t.track;
            track.status = TrackStatus::Finished;
            self.finished.push(track);
        }
        self.finished.sort_by_key(|t| t.track_id);
        self.finished
    }
}

/// Tracks a whole video. Frames are visited in index order; empty frames
/// still advance the lost counters.
pub fn run(frames: &FrameDetections, config: &TrackerConfig) -> Result<Vec<Track>> {
    let mut state = TrackerState::new(*config)?;
    for (i, dets) in frames.iter().enumerate() {
        state.step(i as u64, dets)?;
    }
    Ok(state.finish())
}
