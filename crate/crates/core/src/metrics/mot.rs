//! CLEAR-MOT accuracy.
//!
//! Each frame first keeps last frame's ground-truth/track correspondences
//! that still overlap enough, then optimally assigns the rest on `1 - IoU`.
//! An identity switch is counted whenever a ground-truth object gets matched
//! to a different track than the one it was last matched to.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{iou, BBox, Track};
use crate::tracker::assignment;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotFrame {
    pub ground_truth: Vec<(u64, BBox)>,
    pub predictions: Vec<(u64, BBox)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotEvalSet {
    pub frames: Vec<MotFrame>,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotSummary {
    pub mota: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub idsw: u64,
    pub gt_count: u64,
    pub matches: u64,
}

impl MotEvalSet {
    pub fn new(frames: Vec<MotFrame>) -> Self {
        MotEvalSet {
            frames,
            iou_threshold: 0.5,
        }
    }

    /// Lays out ground-truth and predicted tracks over `n_frames` frames.
    pub fn from_tracks(ground_truth: &[Track], predicted: &[Track], n_frames: usize, iou_threshold: f64) -> Self {
        let mut frames = vec![MotFrame::default(); n_frames];
        for t in ground_truth {
            for d in &t.detections {
                if let Some(f) = frames.get_mut(d.frame_index as usize) {
                    f.ground_truth.push((t.track_id, d.bbox));
                }
            }
        }
        for t in predicted {
            for d in &t.detections {
                if let Some(f) = frames.get_mut(d.frame_index as usize) {
                    f.predictions.push((t.track_id, d.bbox));
                }
            }
        }
        MotEvalSet { frames, iou_threshold }
    }
}

pub fn mota(set: &MotEvalSet) -> Result<MotSummary> {
    let thr = set.iou_threshold;
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut fp, mut fn_, mut idsw, mut gt_count, mut matches) = (0u64, 0u64, 0u64, 0u64, 0u64);

    for frame in &set.frames {
        let gts = &frame.ground_truth;
        let preds = &frame.predictions;
        gt_count += gts.len() as u64;
        let mut gt_used = vec![false; gts.len()];
        let mut pred_used = vec![false; preds.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (g, (gid, gb)) in gts.iter().enumerate() {
            let Some(&tid) = last_match.get(gid) else { continue };
            if let Some(p) = preds.iter().position(|(pid, _)| *pid == tid) {
                if !pred_used[p] && iou(gb, &preds[p].1) >= thr {
                    gt_used[g] = true;
                    pred_used[p] = true;
                    pairs.push((g, p));
                }
            }
        }

        let free_g: Vec<usize> = (0..gts.len()).filter(|&g| !gt_used[g]).collect();
        let free_p: Vec<usize> = (0..preds.len()).filter(|&p| !pred_used[p]).collect();
        if !free_g.is_empty() && !free_p.is_empty() {
            let ious: Vec<Vec<f64>> = free_g
                .iter()
                .map(|&g| free_p.iter().map(|&p| iou(&gts[g].1, &preds[p].1)).collect())
                .collect();
            let cost: Vec<Vec<f64>> = ious.iter().map(|r| r.iter().map(|v| 1.0 - v).collect()).collect();
            for (i, j) in assignment::solve_gated(&cost, |i, j| ious[i][j] >= thr) {
                let (g, p) = (free_g[i], free_p[j]);
                gt_used[g] = true;
                pred_used[p] = true;
                pairs.push((g, p));
            }
        }

        for &(g, p) in &pairs {
            let gid = gts[g].0;
            let tid = preds[p].0;
            if let Some(prev) = last_match.insert(gid, tid) {
                if prev != tid {
                    idsw += 1;
                }
            }
        }
        matches += pairs.len() as u64;
        fn_ += gt_used.iter().filter(|u| !**u).count() as u64;
        fp += pred_used.iter().filter(|u| !**u).count() as u64;
    }

    if gt_count == 0 {
        return Err(Error::UndefinedMetric("MOTA needs at least one ground-truth box".into()));
    }
    Ok(MotSummary {
        mota: 1.0 - (fp + fn_ + idsw) as f64 / gt_count as f64,
        fp,
        fn_,
        idsw,
        gt_count,
        matches,
    })
}

impl MotSummary {
    /// Pools error counts over independently evaluated sequences.
    pub fn combine(parts: &[MotSummary]) -> Result<MotSummary> {
        let sum = |f: fn(&MotSummary) -> u64| parts.iter().map(f).sum::<u64>();
        let (fp, fn_, idsw, gt_count, matches) = (
            sum(|s| s.fp),
            sum(|s| s.fn_),
            sum(|s| s.idsw),
            sum(|s| s.gt_count),
            sum(|s| s.matches),
        );
        if gt_count == 0 {
            return Err(Error::UndefinedMetric("MOTA needs at least one ground-truth box".into()));
        }
        Ok(MotSummary {
            mota: 1.0 - (fp + fn_ + idsw) as f64 / gt_count as f64,
            fp,
            fn_,
            idsw,
            gt_count,
            matches,
        })
    }
}

pub const GT_MOT_HEADER: [&str; 7] = ["video_id", "frame_index", "gt_id", "x1", "y1", "x2", "y2"];

/// Reads `video_id,frame_index,gt_id,x1,y1,x2,y2` into per-video
/// ground-truth tracks (the `gt_id` becomes the track id).
pub fn read_ground_truth_mot<R: Read>(reader: R, source: &str) -> Result<BTreeMap<String, Vec<Track>>> {
    let err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().ne(GT_MOT_HEADER.iter().copied()) {
        return Err(err(1, format!("expected header {}", GT_MOT_HEADER.join(","))));
    }
    let mut rows: Vec<crate::tracker::TrackedRow> = Vec::new();
    let mut seen: BTreeSet<(String, u64, u64)> = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |i: usize| -> Result<u64> {
            rec[i].trim().parse().map_err(|_| err(line, format!("{}: {:?} is not a non-negative integer", GT_MOT_HEADER[i], &rec[i])))
        };
        let real = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| err(line, format!("{}: {:?} is not a number", GT_MOT_HEADER[i], &rec[i])))
        };
        let frame_index = int(1)?;
        let gt_id = int(2)?;
        let bbox = BBox { x1: real(3)?, y1: real(4)?, x2: real(5)?, y2: real(6)? };
        bbox.validate().map_err(|message| Error::Validation {
            path: source.to_string(),
            line,
            message,
        })?;
        if !seen.insert((rec[0].to_string(), frame_index, gt_id)) {
            return Err(Error::Validation {
                path: source.to_string(),
                line,
                message: format!("gt_id {gt_id} repeated in frame {frame_index}"),
            });
        }
        rows.push(crate::tracker::TrackedRow {
            track_id: gt_id,
            detection: crate::model::Detection {
                video_id: rec[0].to_string(),
                frame_index,
                time_ms: 0,
                bbox,
                confidence: 1.0,
            },
            label: None,
        });
    }
    let mut out: BTreeMap<String, Vec<Track>> = BTreeMap::new();
    for t in crate::tracker::tracks_from_rows(rows) {
        out.entry(t.video_id().to_string()).or_default().push(t);
    }
    Ok(out)
}
