use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{BBox, Detection, SpeciesLabel, Track, TrackId, TrackStatus};

pub const TRACKED_HEADER: [&str; 10] = [
    "video_id",
    "frame_index",
    "time_ms",
    "track_id",
    "x1",
    "y1",
    "x2",
    "y2",
    "confidence",
    "label",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRow {
    pub track_id: TrackId,
    pub detection: Detection,
    pub label: Option<SpeciesLabel>,
}

/// Writes one row per detection, ordered by frame then track id.
pub fn write_tracked_detections<W: Write>(writer: W, tracks: &[Track]) -> std::io::Result<()> {
    let mut rows: Vec<(&Track, &Detection)> = tracks
        .iter()
        .flat_map(|t| t.detections.iter().map(move |d| (t, d)))
        .collect();
    rows.sort_by(|a, b| {
        (a.1.video_id.as_str(), a.1.frame_index, a.0.track_id).cmp(&(b.1.video_id.as_str(), b.1.frame_index, b.0.track_id))
    });
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{}", TRACKED_HEADER.join(","))?;
    for (t, d) in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            d.video_id,
            d.frame_index,
            d.time_ms,
            t.track_id,
            d.bbox.x1,
            d.bbox.y1,
            d.bbox.x2,
            d.bbox.y2,
            d.confidence,
            t.label.as_ref().map(SpeciesLabel::as_str).unwrap_or("")
        )?;
    }
    w.flush()
}

pub fn read_tracked_detections<R: Read>(reader: R, source: &str) -> Result<Vec<TrackedRow>> {
    let err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().ne(TRACKED_HEADER.iter().copied()) {
        return Err(err(1, format!("expected header {}", TRACKED_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| err(line, format!("{}: {:?} is not a number", TRACKED_HEADER[i], &rec[i])))
        };
        let int = |i: usize| -> Result<i64> {
            rec[i]
                .parse::<i64>()
                .map_err(|_| err(line, format!("{}: {:?} is not an integer", TRACKED_HEADER[i], &rec[i])))
        };
        let label = match &rec[9] {
            "" => None,
            s => Some(SpeciesLabel::new(s).map_err(|e| err(line, e.to_string()))?),
        };
        let frame_index = int(1)?;
        let track_id = int(3)?;
        if frame_index < 0 || track_id < 1 {
            return Err(err(line, "frame_index and track_id must be non-negative / positive".into()));
        }
        out.push(TrackedRow {
            track_id: track_id as TrackId,
            detection: Detection {
                video_id: rec[0].to_string(),
                frame_index: frame_index as u64,
                time_ms: int(2)?,
                bbox: BBox {
                    x1: num(4)?,
                    y1: num(5)?,
                    x2: num(6)?,
                    y2: num(7)?,
                },
                confidence: num(8)?,
            },
            label,
        });
    }
    Ok(out)
}

/// Regroups rows into tracks keyed by `(video_id, track_id)`.
pub fn tracks_from_rows(rows: Vec<TrackedRow>) -> Vec<Track> {
    let mut by_id: BTreeMap<(String, TrackId), Track> = BTreeMap::new();
    for row in rows {
        let key = (row.detection.video_id.clone(), row.track_id);
        match by_id.get_mut(&key) {
            Some(t) => t.detections.push(row.detection),
            None => {
                let mut t = Track::new(row.track_id, row.detection);
                t.status = TrackStatus::Finished;
                t.label = row.label;
                by_id.insert(key, t);
            }
        }
    }
    let mut tracks: Vec<Track> = by_id.into_values().collect();
    for t in &mut tracks {
        t.detections.sort_by_key(|d| d.frame_index);
    }
    tracks
}
