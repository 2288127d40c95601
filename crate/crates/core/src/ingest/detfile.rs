//! Reference detector backend: per-frame detections from a CSV file.
//!
//! ```text
//! frame_index,time_ms,x1,y1,x2,y2,confidence
//! 5,1667,0.120000,0.300000,0.250000,0.410000,0.870000
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{FrameDetections, SamplingSchedule};
use crate::model::{BBox, Detection};

pub const DETECTION_HEADER: [&str; 7] = ["frame_index", "time_ms", "x1", "y1", "x2", "y2", "confidence"];

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.2;

/// Loads a detection file, grouping rows by frame and dropping rows whose
/// confidence is below `conf_threshold`. Row order within a frame is kept.
pub fn load_detection_file(
    path: &Path,
    schedule: &SamplingSchedule,
    conf_threshold: f64,
) -> Result<FrameDetections> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(file, &path.display().to_string(), schedule, conf_threshold)
}

pub fn read_detections<R: Read>(
    reader: R,
    source: &str,
    schedule: &SamplingSchedule,
    conf_threshold: f64,
) -> Result<FrameDetections> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(parse_err(1, "missing header row".into()));
    }
    if headers.iter().map(str::trim).ne(DETECTION_HEADER.iter().copied()) {
        return Err(parse_err(
            1,
            format!("expected header {:?}, got {:?}", DETECTION_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut frames: FrameDetections = vec![Vec::new(); schedule.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != DETECTION_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", DETECTION_HEADER.len(), record.len()),
            ));
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let int = |i: usize| -> Result<i64> {
            field(i)
                .parse::<i64>()
                .map_err(|_| parse_err(line, format!("{}: {:?} is not an integer", DETECTION_HEADER[i], field(i))))
        };
        let real = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("{}: {:?} is not a number", DETECTION_HEADER[i], field(i))))
        };
        let frame_index = int(0)?;
        let time_ms = int(1)?;
        let bbox = BBox {
            x1: real(2)?,
            y1: real(3)?,
            x2: real(4)?,
            y2: real(5)?,
        };
        let confidence = real(6)?;

        let invalid = |message: String| Error::Validation {
            path: source.to_string(),
            line,
            message,
        };
        bbox.validate().map_err(invalid)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(invalid(format!("confidence {confidence} outside [0,1]")));
        }
        if frame_index < 0 || frame_index as usize >= schedule.len() {
            return Err(Error::FrameOutOfRange {
                path: source.to_string(),
                line,
                frame_index: frame_index.max(0) as u64,
                frames: schedule.len(),
            });
        }
        if confidence < conf_threshold {
            continue;
        }
        frames[frame_index as usize].push(Detection {
            video_id: schedule.video.video_id.clone(),
            frame_index: frame_index as u64,
            time_ms,
            bbox,
            confidence,
        });
    }
    Ok(frames)
}

/// Writes detections in the reference format, coordinates at 6 decimals.
pub fn write_detections<W: Write>(writer: W, frames: &FrameDetections) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{}", DETECTION_HEADER.join(","))?;
    for d in frames.iter().flatten() {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            d.frame_index, d.time_ms, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.confidence
        )?;
    }
    w.flush()
}

pub fn write_detection_file(path: &Path, frames: &FrameDetections) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections(file, frames).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_schedule;
    use crate::model::VideoMeta;
    use proptest::prelude::*;

    fn schedule() -> SamplingSchedule {
        build_schedule(&VideoMeta::new("vid", 10_000, 640, 480).unwrap(), 3.0).unwrap()
    }

    fn load(text: &str) -> Result<FrameDetections> {
        read_detections(text.as_bytes(), "test.csv", &schedule(), DEFAULT_CONF_THRESHOLD)
    }

    const HEADER: &str = "frame_index,time_ms,x1,y1,x2,y2,confidence\n";

    #[test]
    fn confidence_below_threshold_is_dropped() {
        let text = format!(
            "{HEADER}0,0,0.100000,0.100000,0.200000,0.200000,0.190000\n0,0,0.100000,0.100000,0.200000,0.200000,0.200000\n"
        );
        let frames = load(&text).unwrap();
        assert_eq!(frames[0].len(), 1);
        assert_eq!(frames[0][0].confidence, 0.2);
    }

    #[test]
    fn header_only_gives_empty_frames() {
        let frames = load(HEADER).unwrap();
        assert_eq!(frames.len(), 30);
        assert!(frames.iter().all(Vec::is_empty));
    }

    #[test]
    fn rows_grouped_by_frame_in_order() {
        let text = format!(
            "{HEADER}5,1667,0.100000,0.100000,0.200000,0.200000,0.900000\n\
             4,1333,0.500000,0.500000,0.600000,0.600000,0.900000\n\
             5,1667,0.300000,0.300000,0.400000,0.400000,0.800000\n\
             5,1667,0.700000,0.700000,0.800000,0.800000,0.700000\n"
        );
        let frames = load(&text).unwrap();
        let xs: Vec<f64> = frames[5].iter().map(|d| d.bbox.x1).collect();
        assert_eq!(xs, vec![0.1, 0.3, 0.7]);
        assert_eq!(frames[4].len(), 1);
        assert!(frames[5].iter().all(|d| d.video_id == "vid" && d.frame_index == 5));
    }

    #[test]
    fn malformed_row_names_line() {
        let text = format!("{HEADER}0,0,0.1,0.1,0.2,0.2,0.9\n1,333,abc,0.1,0.2,0.2,0.9\n");
        match load(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{HEADER}0,0,0.1,0.1\n");
        assert!(matches!(load(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn frame_out_of_schedule_is_range_error() {
        let text = format!("{HEADER}30,10000,0.1,0.1,0.2,0.2,0.9\n");
        assert!(matches!(load(&text), Err(Error::FrameOutOfRange { frame_index: 30, line: 2, .. })));
    }

    #[test]
    fn invalid_geometry_names_line() {
        let text = format!("{HEADER}0,0,0.3,0.1,0.2,0.2,0.9\n");
        assert!(matches!(load(&text), Err(Error::Validation { line: 2, .. })));
        let text = format!("{HEADER}0,0,0.1,0.1,0.2,0.2,0.9\n0,0,0.1,0.1,1.2,0.2,0.9\n");
        assert!(matches!(load(&text), Err(Error::Validation { line: 3, .. })));
    }

    #[test]
    fn missing_header_is_rejected() {
        assert!(load("0,0,0.1,0.1,0.2,0.2,0.9\n").is_err());
    }

    fn coord() -> impl Strategy<Value = (u32, u32)> {
        (0u32..999_999).prop_flat_map(|a| (Just(a), (a + 1)..=1_000_000))
    }

    proptest! {
        #[test]
        fn surviving_rows_round_trip_bit_exactly(
            rows in proptest::collection::vec((0u64..30, coord(), coord(), 0u32..=1_000_000), 0..40)
        ) {
            let mut text = String::from(HEADER);
            let mut sorted = rows.clone();
            sorted.sort_by_key(|r| r.0);
            for (f, (x1, x2), (y1, y2), c) in &sorted {
                text.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    f, crate::ingest::sample_time_ms(*f, 3.0),
                    *x1 as f64 / 1e6, *y1 as f64 / 1e6, *x2 as f64 / 1e6, *y2 as f64 / 1e6, *c as f64 / 1e6
                ));
            }
            let frames = read_detections(text.as_bytes(), "p", &schedule(), 0.0).unwrap();
            let mut out = Vec::new();
            write_detections(&mut out, &frames).unwrap();
            prop_assert_eq!(String::from_utf8(out).unwrap(), text);
        }
    }
}
