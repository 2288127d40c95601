//! Expert verdicts and their propagation onto tracks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SpeciesLabel, Track, TrackId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "species", rename_all = "lowercase")]
pub enum Verdict {
    Labeled(SpeciesLabel),
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub video_id: String,
    pub track_id: TrackId,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Name of a file in the track image directory, as understood by the
/// rename workflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageName {
    Untouched(TrackId),
    Renamed(TrackId, SpeciesLabel),
}

/// Parses `<track_id>.jpg` or `<track_id>-<species>.jpg`.
pub fn parse_image_name(name: &str) -> Option<ImageName> {
    let stem = name.strip_suffix(".jpg")?;
    let (id, species) = match stem.split_once('-') {
        Some((id, species)) => (id, Some(species)),
        None => (stem, None),
    };
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let id: TrackId = id.parse().ok()?;
    match species {
        None => Some(ImageName::Untouched(id)),
        Some(s) => SpeciesLabel::new(s).ok().map(|s| ImageName::Renamed(id, s)),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FsAnnotations {
    pub annotations: Vec<Annotation>,
    pub warnings: Vec<String>,
}

/// Reads verdicts from renamed or deleted track images.
///
/// `exported` lists, per video, the track ids whose image was written under
/// `tracks_dir/<video_id>/`. A renamed file labels its track, a missing file
/// rejects it, an untouched file yields nothing.
pub fn collect_filesystem_annotations(
    tracks_dir: &Path,
    exported: &BTreeMap<String, Vec<TrackId>>,
) -> Result<FsAnnotations> {
    let mut out = FsAnnotations::default();
    for (video_id, ids) in exported {
        let dir = tracks_dir.join(video_id);
        let mut untouched = BTreeSet::new();
        let mut renamed: BTreeMap<TrackId, BTreeSet<SpeciesLabel>> = BTreeMap::new();
        if dir.is_dir() {
            let mut names: Vec<String> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            for name in names {
                match parse_image_name(&name) {
                    Some(ImageName::Untouched(id)) => {
                        untouched.insert(id);
                    }
                    Some(ImageName::Renamed(id, species)) => {
                        renamed.entry(id).or_default().insert(species);
                    }
                    None => out
                        .warnings
                        .push(format!("{video_id}: skipping unrecognized file {name:?}")),
                }
            }
        }
        let known: BTreeSet<TrackId> = ids.iter().copied().collect();
        for id in renamed.keys().chain(untouched.iter()) {
            if !known.contains(id) {
                out.warnings
                    .push(format!("{video_id}: image for track {id} which was never exported, skipped"));
            }
        }
        for &id in &known {
            let verdict = match renamed.get(&id) {
                Some(labels) if labels.len() > 1 => {
                    out.warnings.push(format!(
                        "{video_id}: track {id} renamed to several species {:?}, skipped",
                        labels.iter().map(SpeciesLabel::as_str).collect::<Vec<_>>()
                    ));
                    continue;
                }
                Some(labels) => Verdict::Labeled(labels.iter().next().expect("non-empty").clone()),
                None if untouched.contains(&id) => continue,
                None => Verdict::Rejected,
            };
            out.annotations.push(Annotation {
                video_id: video_id.clone(),
                track_id: id,
                verdict,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconciled {
    /// Surviving tracks, each labeled (unannotated ones as `unclassified`).
    pub kept: Vec<Track>,
    /// Rejected tracks, flagged and unlabeled.
    pub rejected: Vec<Track>,
}

/// Applies verdicts to tracks. When a track has several annotations the
/// last one in `annotations` wins.
pub fn reconcile(tracks: &[Track], annotations: &[Annotation]) -> Result<Reconciled> {
    let known: BTreeSet<(&str, TrackId)> = tracks.iter().map(|t| (t.video_id(), t.track_id)).collect();
    let unknown: Vec<String> = annotations
        .iter()
        .filter(|a| !known.contains(&(a.video_id.as_str(), a.track_id)))
        .map(|a| format!("{}/{}", a.video_id, a.track_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownTracks(unknown.join(", ")));
    }
    let latest: BTreeMap<(&str, TrackId), &Verdict> = annotations
        .iter()
        .map(|a| ((a.video_id.as_str(), a.track_id), &a.verdict))
        .collect();

    let mut out = Reconciled::default();
    for t in tracks {
        let mut t = t.clone();
        match latest.get(&(t.video_id(), t.track_id)) {
            Some(Verdict::Rejected) => {
                t.rejected = true;
                t.label = None;
                out.rejected.push(t);
            }
            Some(Verdict::Labeled(species)) => {
                t.rejected = false;
                t.label = Some(species.clone());
                out.kept.push(t);
            }
            None => {
                t.rejected = false;
                if t.label.is_none() {
                    t.label = Some(SpeciesLabel::unclassified());
                }
                out.kept.push(t);
            }
        }
    }
    Ok(out)
}
