//! Detection quality: precision, recall, F1 and IoU-thresholded AP.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision `tp/(tp+fp)`, recall `tp/(tp+fn)`, F1 their harmonic mean.
///
/// Empty denominators: precision 0; recall 1 when there are no false
/// positives either, else 0; F1 0 when precision + recall is 0.
pub fn precision_recall_f1(tp: u64, fp: u64, fn_: u64) -> PrecisionRecall {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 {
        if fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall { precision, recall, f1 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedBox {
    pub bbox: BBox,
    pub confidence: f64,
    pub class: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFrame {
    pub ground_truth: Vec<(String, BBox)>,
    pub predictions: Vec<PredictedBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvalSet {
    pub frames: Vec<EvalFrame>,
    pub iou_threshold: f64,
}

impl DetectionEvalSet {
    pub fn new(frames: Vec<EvalFrame>) -> Self {
        DetectionEvalSet {
            frames,
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: String,
    pub ap: f64,
    pub ground_truth: usize,
    pub tp: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub per_class: Vec<ClassAp>,
    /// Mean AP over classes with at least one ground-truth box.
    pub mean: Option<f64>,
    /// Totals at the IoU threshold over all confidences.
    pub counts: PrecisionRecall,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub warnings: Vec<String>,
}

/// Marks each prediction of `class` as TP or FP, in descending confidence.
///
/// Every prediction greedily takes the still-unmatched ground-truth box of
/// its class in its frame with the highest IoU, if that IoU reaches the
/// threshold. Equal confidences keep frame then input order.
fn match_class(set: &DetectionEvalSet, class: &str) -> Vec<bool> {
    let mut preds: Vec<(usize, &PredictedBox)> = set
        .frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| fr.predictions.iter().filter(|p| p.class == class).map(move |p| (f, p)))
        .collect();
    preds.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));
    let mut used: Vec<Vec<bool>> = set.frames.iter().map(|f| vec![false; f.ground_truth.len()]).collect();
    preds
        .into_iter()
        .map(|(f, p)| {
            let mut best: Option<(usize, f64)> = None;
            for (g, (gc, gb)) in set.frames[f].ground_truth.iter().enumerate() {
                if gc != class || used[f][g] {
                    continue;
                }
                let v = iou(&p.bbox, gb);
                if v >= set.iou_threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    used[f][g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the precision envelope of a ranked TP/FP list.
pub fn average_precision(hits: &[bool], ground_truth: usize) -> f64 {
    if ground_truth == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        points.push((tp as f64 / ground_truth as f64, tp as f64 / (k + 1) as f64));
    }
    // envelope: precision at recall r is the best precision at any recall >= r
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn map50(set: &DetectionEvalSet) -> Result<MapReport> {
    if !(set.iou_threshold > 0.0 && set.iou_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "iou_threshold {} outside (0,1]",
            set.iou_threshold
        )));
    }
    let mut classes: BTreeSet<&str> = BTreeSet::new();
    let mut gt_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &set.frames {
        for (c, _) in &f.ground_truth {
            classes.insert(c);
            *gt_counts.entry(c).or_default() += 1;
        }
        for p in &f.predictions {
            classes.insert(&p.class);
        }
    }
    let mut per_class = Vec::new();
    let mut warnings = Vec::new();
    let (mut tp_all, mut fp_all, mut gt_all) = (0u64, 0u64, 0u64);
    for class in classes {
        let n_gt = gt_counts.get(class).copied().unwrap_or(0);
        let hits = match_class(set, class);
        let tp = hits.iter().filter(|h| **h).count() as u64;
        let fp = hits.len() as u64 - tp;
        if n_gt == 0 {
            warnings.push(format!("class {class:?} has predictions but no ground truth, AP = 0"));
        }
        tp_all += tp;
        fp_all += fp;
        gt_all += n_gt as u64;
        per_class.push(ClassAp {
            class: class.to_string(),
            ap: average_precision(&hits, n_gt),
            ground_truth: n_gt,
            tp,
            fp,
        });
    }
    let scored: Vec<f64> = per_class.iter().filter(|c| c.ground_truth > 0).map(|c| c.ap).collect();
    let mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    let fn_ = gt_all - tp_all;
    Ok(MapReport {
        per_class,
        mean,
        counts: precision_recall_f1(tp_all, fp_all, fn_),
        tp: tp_all,
        fp: fp_all,
        fn_,
        warnings,
    })
}

pub const DET_TRUTH_HEADER: [&str; 6] = ["image_id", "class", "x1", "y1", "x2", "y2"];
pub const DET_PRED_HEADER: [&str; 7] = ["image_id", "class", "x1", "y1", "x2", "y2", "confidence"];

fn read_rows<R: Read>(reader: R, source: &str, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().ne(header.iter().copied()) {
        return Err(err(1, format!("expected header {}", header.join(","))));
    }
    rdr.records()
        .map(|r| {
            r.map(|rec| (rec.position().map_or(0, |p| p.line()), rec))
                .map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))
        })
        .collect()
}

fn parse_box(rec: &csv::StringRecord, line: u64, source: &str) -> Result<BBox> {
    let mut v = [0.0; 4];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = rec[2 + i].trim().parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line,
            message: format!("{:?} is not a number", &rec[2 + i]),
        })?;
    }
    let b = BBox { x1: v[0], y1: v[1], x2: v[2], y2: v[3] };
    b.validate().map_err(|message| Error::Validation {
        path: source.to_string(),
        line,
        message,
    })?;
    Ok(b)
}

/// Builds an evaluation set from a ground-truth file
/// (`image_id,class,x1,y1,x2,y2`) and a prediction file (same plus
/// `confidence`). Frames are ordered by image id.
pub fn read_detection_eval<R1: Read, R2: Read>(
    truth: R1,
    truth_source: &str,
    predictions: R2,
    pred_source: &str,
    iou_threshold: f64,
) -> Result<DetectionEvalSet> {
    let mut frames: BTreeMap<String, EvalFrame> = BTreeMap::new();
    for (line, rec) in read_rows(truth, truth_source, &DET_TRUTH_HEADER)? {
        let b = parse_box(&rec, line, truth_source)?;
        frames
            .entry(rec[0].to_string())
            .or_default()
            .ground_truth
            .push((rec[1].to_string(), b));
    }
    for (line, rec) in read_rows(predictions, pred_source, &DET_PRED_HEADER)? {
        let b = parse_box(&rec, line, pred_source)?;
        let confidence: f64 = rec[6].trim().parse().map_err(|_| Error::Parse {
            path: pred_source.to_string(),
            line,
            message: format!("{:?} is not a number", &rec[6]),
        })?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation {
                path: pred_source.to_string(),
                line,
                message: format!("confidence {confidence} outside [0,1]"),
            });
        }
        frames.entry(rec[0].to_string()).or_default().predictions.push(PredictedBox {
            bbox: b,
            confidence,
            class: rec[1].to_string(),
        });
    }
    Ok(DetectionEvalSet {
        frames: frames.into_values().collect(),
        iou_threshold,
    })
}
