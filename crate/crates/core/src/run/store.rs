//! Append-only verdict log, one JSON object per line:
//!
//! ```json
//! {"seq":3,"timestamp_ms":1760000000000,"video_id":"reef_a","track_id":7,"verdict":"labeled","species":"carcharhinus_perezi"}
//! {"seq":4,"timestamp_ms":1760000000500,"video_id":"reef_a","track_id":3,"verdict":"rejected"}
//! ```
//!
//! The latest verdict for a track is the last record after ordering by
//! `(timestamp_ms, seq)`. Records are never rewritten.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::{Annotation, Verdict};
use crate::error::{Error, Result};
use crate::model::TrackId;

pub const STORE_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub annotation: Annotation,
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    file: File,
    records: Vec<AnnotationRecord>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AnnotationStore {
    /// Opens (creating if needed) the log in `run_dir`. A torn final line
    /// left by a crash mid-write is dropped; it was never acknowledged.
    pub fn open(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(STORE_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let mut records = Vec::new();
        let mut torn = false;
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<AnnotationRecord>(line) {
                Ok(r) => records.push(r),
                Err(_) if i + 1 == lines.len() && !complete => {
                    torn = true;
                    log::warn!("{}: ignoring torn final record", path.display());
                }
                Err(e) => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: i as u64 + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if torn {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64).map_err(|e| Error::io(&path, e))?;
        } else if !complete && !text.is_empty() {
            file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(AnnotationStore { path, file, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    /// Appends a verdict and syncs it to disk before returning.
    pub fn append(&mut self, annotation: Annotation) -> Result<AnnotationRecord> {
        let record = AnnotationRecord {
            seq: self.records.last().map_or(0, |r| r.seq + 1),
            timestamp_ms: now_ms(),
            annotation,
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records.push(record.clone());
        Ok(record)
    }

    /// Latest verdict per `(video_id, track_id)`.
    pub fn latest(&self) -> BTreeMap<(String, TrackId), Verdict> {
        latest_verdicts(&self.records)
    }
}

pub fn latest_verdicts(records: &[AnnotationRecord]) -> BTreeMap<(String, TrackId), Verdict> {
    let mut ordered: Vec<&AnnotationRecord> = records.iter().collect();
    ordered.sort_by_key(|r| (r.timestamp_ms, r.seq));
    ordered
        .into_iter()
        .map(|r| {
            (
                (r.annotation.video_id.clone(), r.annotation.track_id),
                r.annotation.verdict.clone(),
            )
        })
        .collect()
}
