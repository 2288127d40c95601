use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SamplingSchedule;
use crate::model::{SpeciesLabel, Track, UNCLASSIFIED};

pub const MAXN_HEADER: [&str; 5] = ["video_id", "species", "maxn", "frame_index_at_max", "time_ms_at_max"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxNRow {
    pub video_id: String,
    pub species: String,
    pub maxn: u32,
    pub frame_index_at_max: u64,
    pub time_ms_at_max: i64,
}

/// Species-specific MaxN per video, rows sorted by `(video_id, species)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxNReport {
    pub rows: Vec<MaxNRow>,
}

impl MaxNReport {
    pub fn new(mut rows: Vec<MaxNRow>) -> Self {
        rows.sort_by(|a, b| (&a.video_id, &a.species).cmp(&(&b.video_id, &b.species)));
        MaxNReport { rows }
    }

    pub fn merge(reports: impl IntoIterator<Item = MaxNReport>) -> Self {
        MaxNReport::new(reports.into_iter().flat_map(|r| r.rows).collect())
    }

    pub fn get(&self, video_id: &str, species: &str) -> Option<&MaxNRow> {
        self.rows.iter().find(|r| r.video_id == video_id && r.species == species)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "{}", MAXN_HEADER.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.video_id, r.species, r.maxn, r.frame_index_at_max, r.time_ms_at_max
            )?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let err = |line: u64, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.iter().ne(MAXN_HEADER.iter().copied()) {
            return Err(err(1, format!("expected header {}", MAXN_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<MaxNRow>() {
            rows.push(rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?);
        }
        Ok(MaxNReport::new(rows))
    }
}

/// Species name a kept track counts toward.
pub fn species_of(track: &Track) -> String {
    track
        .label
        .as_ref()
        .map(SpeciesLabel::to_string)
        .unwrap_or_else(|| UNCLASSIFIED.to_string())
}

/// For each species, the largest number of its detections on any single
/// sampled frame of the schedule's video, and the earliest frame reaching it.
///
/// Rejected tracks and tracks of other videos are ignored; unlabeled tracks
/// count toward the `unclassified` pseudo-species.
pub fn compute_ssmaxn(tracks: &[Track], schedule: &SamplingSchedule) -> MaxNReport {
    let video_id = &schedule.video.video_id;
    let mut counts: BTreeMap<&str, BTreeMap<u64, (u32, i64)>> = BTreeMap::new();
    let species: Vec<(usize, String)> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.rejected && t.video_id() == video_id)
        .map(|(i, t)| (i, species_of(t)))
        .collect();
    for (i, name) in &species {
        let per_frame = counts.entry(name.as_str()).or_default();
        for d in &tracks[*i].detections {
            let time = schedule.time_ms(d.frame_index).unwrap_or(d.time_ms);
            per_frame.entry(d.frame_index).or_insert((0, time)).0 += 1;
        }
    }
    let rows = counts
        .into_iter()
        .filter_map(|(name, per_frame)| {
            let mut best: Option<(u64, u32, i64)> = None;
            for (frame, (n, time)) in per_frame {
                if best.is_none_or(|b| n > b.1) {
                    best = Some((frame, n, time));
                }
            }
            best.map(|(frame, n, time)| MaxNRow {
                video_id: video_id.clone(),
                species: name.to_string(),
                maxn: n,
                frame_index_at_max: frame,
                time_ms_at_max: time,
            })
        })
        .collect();
    MaxNReport::new(rows)
}
