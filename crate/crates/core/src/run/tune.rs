use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{build_schedule, load_detection_file, synthesize, FrameDetections, SamplingSchedule, ScenarioSpec};
use crate::metrics::{grid_search, mota, read_ground_truth_mot, GridResult, GridSpec, MotEvalSet, MotSummary};
use crate::model::{Track, VideoMeta};
use crate::postfilter;
use crate::run::PipelineConfig;
use crate::tracker;

/// Detections of one video with its ground-truth tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub schedule: SamplingSchedule,
    /// All detections, before the confidence threshold.
    pub frames: FrameDetections,
    pub ground_truth: Vec<Track>,
}

impl LabeledSequence {
    pub fn from_scenario(spec: &ScenarioSpec, fps: f64, seed: u64) -> Result<Self> {
        let schedule = build_schedule(&spec.video, fps)?;
        let s = synthesize(spec, &schedule, seed)?;
        Ok(LabeledSequence {
            schedule,
            frames: s.frames,
            ground_truth: s.ground_truth,
        })
    }

    /// Detection file plus a ground-truth MOT file whose `video_id` column
    /// matches `meta`.
    pub fn from_files(meta: &VideoMeta, fps: f64, detections: &Path, ground_truth: &Path) -> Result<Self> {
        let schedule = build_schedule(meta, fps)?;
        let mut frames = load_detection_file(detections, &schedule, 0.0)?;
        for d in frames.iter_mut().flatten() {
            d.video_id = meta.video_id.clone();
        }
        let file = std::fs::File::open(ground_truth).map_err(|e| Error::io(ground_truth, e))?;
        let mut gt = read_ground_truth_mot(file, &ground_truth.display().to_string())?;
        Ok(LabeledSequence {
            schedule,
            frames,
            ground_truth: gt.remove(&meta.video_id).unwrap_or_default(),
        })
    }
}

/// Tracks, filters and scores every sequence under one configuration,
/// pooling error counts.
pub fn evaluate_config(cfg: &PipelineConfig, sequences: &[LabeledSequence]) -> Result<MotSummary> {
    let mut parts = Vec::new();
    for seq in sequences {
        let frames: FrameDetections = seq
            .frames
            .iter()
            .map(|f| f.iter().filter(|d| d.confidence >= cfg.conf_threshold).cloned().collect())
            .collect();
        let tracks = tracker::run(&frames, &cfg.tracker)?;
        let kept = postfilter::apply(tracks, &cfg.postfilter).kept;
        let set = MotEvalSet::from_tracks(&seq.ground_truth, &kept, seq.schedule.len(), 0.5);
        parts.push(mota(&set)?);
    }
    MotSummary::combine(&parts)
}

/// Grid search over `base` with each cell's overrides applied. Returns the
/// full table and the winning configuration.
pub fn tune(grid: &GridSpec, base: &PipelineConfig, sequences: &[LabeledSequence]) -> Result<(GridResult, Option<PipelineConfig>)> {
    if grid.axes.iter().any(|a| a.name == "fps") {
        return Err(Error::Config("fps is fixed by the sequences and cannot be a grid axis".into()));
    }
    let result = grid_search(grid, |cell| evaluate_config(&base.with_params(cell)?, sequences))?;
    let best = result
        .best_row()
        .map(|row| base.with_params(&row.params))
        .transpose()?;
    Ok((result, best))
}

/// Parameter values of a config by key, for reporting.
pub fn describe(cfg: &PipelineConfig) -> BTreeMap<&'static str, f64> {
    let t = &cfg.tracker;
    let p = &cfg.postfilter;
    BTreeMap::from([
        ("fps", cfg.fps),
        ("conf_threshold", cfg.conf_threshold),
        ("high_conf_thresh", t.high_conf_thresh),
        ("low_conf_floor", t.low_conf_floor),
        ("match_iou_stage1", t.match_iou_stage1),
        ("match_iou_stage2", t.match_iou_stage2),
        ("new_track_thresh", t.new_track_thresh),
        ("lost_buffer_frames", t.lost_buffer_frames as f64),
        ("position_noise_scale", t.position_noise_scale),
        ("velocity_noise_scale", t.velocity_noise_scale),
        ("min_span_s", p.min_span_s),
        ("min_displacement", p.min_displacement),
        ("keep_conf", p.keep_conf),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::GridAxis;

    const TWO_ACTORS: &str = r#"
[video]
video_id = "v"
duration_ms = 10000
frame_width_px = 640
frame_height_px = 360

[[actors]]
species = "a"
entry_ms = 0
exit_ms = 10000
start_center = [0.2, 0.3]
velocity = [0.04, 0.0]
size = [0.1, 0.08]
confidence = 0.9

[[actors]]
species = "b"
entry_ms = 2000
exit_ms = 9000
start_center = [0.8, 0.7]
velocity = [-0.03, 0.0]
size = [0.1, 0.08]
confidence = 0.8
missed = [[4000, 6000]]
"#;

    #[test]
    fn default_config_tracks_clean_scenario() {
        let seq = LabeledSequence::from_scenario(&ScenarioSpec::from_toml(TWO_ACTORS).unwrap(), 3.0, 0).unwrap();
        let s = evaluate_config(&PipelineConfig::default(), &[seq]).unwrap();
        // the 2 s detector dropout of the second actor is 6 missed boxes at 3 fps
        assert_eq!((s.fp, s.fn_, s.idsw), (0, 6, 0), "{s:?}");
    }

    #[test]
    fn best_matches_table_argmax() {
        let seq = LabeledSequence::from_scenario(&ScenarioSpec::from_toml(TWO_ACTORS).unwrap(), 3.0, 0).unwrap();
        let grid = GridSpec {
            axes: vec![
                GridAxis { name: "lost_buffer_frames".into(), values: vec![0.0, 3.0, 9.0] },
                GridAxis { name: "keep_conf".into(), values: vec![0.5, 0.95] },
            ],
        };
        let (result, best) = tune(&grid, &PipelineConfig::default(), &[seq]).unwrap();
        assert_eq!(result.rows.len(), 6);
        let scores: Vec<&MotSummary> = result.rows.iter().map(|r| r.outcome.as_ref().unwrap()).collect();
        let top = scores.iter().map(|s| s.mota).fold(f64::MIN, f64::max);
        let b = result.best.unwrap();
        assert_eq!(scores[b].mota, top);
        assert!(best.is_some());
    }

    #[test]
    fn fps_axis_rejected() {
        let grid = GridSpec { axes: vec![GridAxis { name: "fps".into(), values: vec![1.0] }] };
        assert!(tune(&grid, &PipelineConfig::default(), &[]).is_err());
    }
}
