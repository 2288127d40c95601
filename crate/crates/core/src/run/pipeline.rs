use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    collect_filesystem_annotations, compute_ssmaxn, export_track_images, parse_image_name, reconcile, track_image_path,
    Annotation, FrameStore, FsAnnotations, ImageName, MaxNReport, Verdict,
};
use crate::error::{Error, Result};
use crate::ingest::{
    build_schedule, load_detection_file, synthesize, write_detection_file, FrameDetections, SamplingSchedule,
    ScenarioSpec,
};
use crate::inpaint::RasterImage;
use crate::model::{track_max_center_displacement, track_span_s, Track, TrackId, VideoMeta};
use crate::postfilter;
use crate::run::manifest::{InputSource, RunManifest, Stage, VideoEntry, MANIFEST_FILE};
use crate::run::PipelineConfig;
use crate::tracker::{self, read_tracked_detections, tracks_from_rows, write_tracked_detections};

pub const MAXN_FILE: &str = "maxn.csv";
pub const TRACKS_DIR: &str = "tracks";
pub const VIDEOS_DIR: &str = "videos";
pub const INPUT_DETECTIONS_FILE: &str = "input_detections.csv";
pub const TRACKED_FILE: &str = "detections.csv";
pub const LABELED_FILE: &str = "detections_labeled.csv";
pub const KEPT_FILE: &str = "tracks_kept.csv";
pub const REMOVED_FILE: &str = "tracks_removed.csv";

/// One video to analyze from a detection file.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoInput {
    pub meta: VideoMeta,
    pub detections: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyzeInput {
    Detections(Vec<VideoInput>),
    Scenario { spec: ScenarioSpec, seed: u64 },
}

impl AnalyzeInput {
    fn source(&self) -> Result<InputSource> {
        Ok(match self {
            AnalyzeInput::Detections(videos) => InputSource::Detections {
                files: videos
                    .iter()
                    .map(|v| (v.meta.video_id.clone(), v.detections.display().to_string()))
                    .collect(),
            },
            AnalyzeInput::Scenario { spec, seed } => InputSource::Scenario {
                scenario: toml::to_string(spec).map_err(|e| Error::Scenario(e.to_string()))?,
                seed: *seed,
            },
        })
    }

    fn videos(&self) -> Vec<VideoMeta> {
        match self {
            AnalyzeInput::Detections(videos) => videos.iter().map(|v| v.meta.clone()).collect(),
            AnalyzeInput::Scenario { spec, .. } => vec![spec.video.clone()],
        }
    }
}

/// Per-track row of `tracks_kept.csv` / `tracks_removed.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track_id: TrackId,
    pub first_frame: u64,
    pub last_frame: u64,
    pub detections: usize,
    pub span_s: f64,
    pub max_displacement: f64,
    pub max_confidence: f64,
}

impl TrackSummary {
    pub fn of(track: &Track) -> Self {
        TrackSummary {
            track_id: track.track_id,
            first_frame: track.first().frame_index,
            last_frame: track.last().frame_index,
            detections: track.detections.len(),
            span_s: track_span_s(track),
            max_displacement: track_max_center_displacement(track),
            max_confidence: track.max_confidence(),
        }
    }
}

fn write_summaries(path: &Path, tracks: &[Track]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if tracks.is_empty() {
        w.write_record(["track_id", "first_frame", "last_frame", "detections", "span_s", "max_displacement", "max_confidence"])
            .map_err(|e| Error::Run(e.to_string()))?;
    }
    for t in tracks {
        w.serialize(TrackSummary::of(t)).map_err(|e| Error::Run(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summaries(path: &Path) -> Result<Vec<TrackSummary>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Run(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::Run(format!("{}: {e}", path.display()))))
        .collect()
}

/// Writes a file through a temporary sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Frame rasters painted from the detections themselves: a dark water
/// gradient with every box filled. Used for synthetic scenarios, which have
/// no real footage.
pub struct SyntheticFrames {
    width: u32,
    height: u32,
    frames: BTreeMap<String, FrameDetections>,
}

impl SyntheticFrames {
    /// Renders at most 640 px wide, keeping the video's aspect ratio.
    pub fn new(meta: &VideoMeta, frames: FrameDetections) -> Self {
        let scale = (640.0 / meta.frame_width_px as f64).min(1.0);
        SyntheticFrames {
            width: ((meta.frame_width_px as f64 * scale).round() as u32).max(1),
            height: ((meta.frame_height_px as f64 * scale).round() as u32).max(1),
            frames: BTreeMap::from([(meta.video_id.clone(), frames)]),
        }
    }
}

impl FrameStore for SyntheticFrames {
    fn frame(&self, video_id: &str, frame_index: u64) -> Option<RasterImage> {
        let dets = self.frames.get(video_id)?.get(frame_index as usize)?;
        let mut img = RasterImage::filled(self.width, self.height, [0, 0, 0]);
        for y in 0..self.height {
            let shade = (90 - 60 * y / self.height) as u8;
            for x in 0..self.width {
                img.set(x, y, [10, shade / 2 + 20, shade + 40]);
            }
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for d in dets {
            let px = |v: f64, size: f64, max: u32| ((v * size) as u32).min(max - 1);
            for y in px(d.bbox.y1, h, self.height)..=px(d.bbox.y2, h, self.height) {
                for x in px(d.bbox.x1, w, self.width)..=px(d.bbox.x2, w, self.width) {
                    img.set(x, y, [150, 140, 120]);
                }
            }
        }
        Some(img)
    }
}

/// A run directory: manifest plus the per-stage files it describes.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = RunManifest::load(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn video_dir(&self, video_id: &str) -> PathBuf {
        self.root.join(VIDEOS_DIR).join(video_id)
    }

    pub fn tracks_dir(&self) -> PathBuf {
        self.root.join(TRACKS_DIR)
    }

    pub fn schedule(&self, video_id: &str) -> Result<SamplingSchedule> {
        let v = self.manifest.video(video_id)?;
        build_schedule(&v.meta, v.fps)
    }

    /// All tracks the tracker produced for a video.
    pub fn tracked(&self, video_id: &str) -> Result<Vec<Track>> {
        let path = self.video_dir(video_id).join(TRACKED_FILE);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(tracks_from_rows(read_tracked_detections(file, &path.display().to_string())?))
    }

    pub fn kept_summaries(&self, video_id: &str) -> Result<Vec<TrackSummary>> {
        read_summaries(&self.video_dir(video_id).join(KEPT_FILE))
    }

    /// Tracks that survived the post-filter.
    pub fn kept_tracks(&self, video_id: &str) -> Result<Vec<Track>> {
        let kept: BTreeSet<TrackId> = self.kept_summaries(video_id)?.iter().map(|s| s.track_id).collect();
        Ok(self
            .tracked(video_id)?
            .into_iter()
            .filter(|t| kept.contains(&t.track_id))
            .collect())
    }

    /// Current file of a track's image, renamed or not.
    pub fn image_path(&self, video_id: &str, track_id: TrackId) -> Option<PathBuf> {
        let plain = track_image_path(&self.tracks_dir(), video_id, track_id);
        if plain.is_file() {
            return Some(plain);
        }
        let dir = self.tracks_dir().join(video_id);
        let mut names: Vec<String> = std::fs::read_dir(&dir)
            .ok()?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| matches!(parse_image_name(n), Some(ImageName::Renamed(id, _)) if id == track_id))
            .collect();
        names.sort();
        names.first().map(|n| dir.join(n))
    }

    pub fn filesystem_annotations(&self) -> Result<FsAnnotations> {
        let exported: BTreeMap<String, Vec<TrackId>> = self
            .manifest
            .videos
            .iter()
            .map(|(v, e)| (v.clone(), e.images.clone()))
            .collect();
        collect_filesystem_annotations(&self.tracks_dir(), &exported)
    }

    /// Combines renamed/deleted images with the annotation store's latest
    /// verdicts. A track given different verdicts by the two is an error.
    pub fn merged_annotations(&self, store: &BTreeMap<(String, TrackId), Verdict>) -> Result<Vec<Annotation>> {
        let fs = self.filesystem_annotations()?;
        for w in &fs.warnings {
            log::warn!("{w}");
        }
        let mut merged: BTreeMap<(String, TrackId), Verdict> = store.clone();
        let mut conflicts = Vec::new();
        for a in fs.annotations {
            let key = (a.video_id.clone(), a.track_id);
            match merged.get(&key) {
                Some(v) if *v != a.verdict => conflicts.push(format!("{}/{}", a.video_id, a.track_id)),
                _ => {
                    merged.insert(key, a.verdict);
                }
            }
        }
        if !conflicts.is_empty() {
            return Err(Error::ConflictingVerdicts(conflicts.join(", ")));
        }
        Ok(merged
            .into_iter()
            .map(|((video_id, track_id), verdict)| Annotation {
                video_id,
                track_id,
                verdict,
            })
            .collect())
    }

    fn require_exported(&self) -> Result<()> {
        match self.manifest.videos.iter().find(|(_, e)| !e.done(Stage::Exported)) {
            Some((v, _)) => Err(Error::Run(format!("video {v:?} has not finished analysis; re-run analyze"))),
            None => Ok(()),
        }
    }

    /// Reconciled tracks of every video and the MaxN they give.
    fn reconciled(&self, store: &BTreeMap<(String, TrackId), Verdict>) -> Result<(Vec<Track>, MaxNReport)> {
        self.require_exported()?;
        let annotations = self.merged_annotations(store)?;
        let mut tracks = Vec::new();
        for v in self.manifest.videos.keys() {
            tracks.extend(self.kept_tracks(v)?);
        }
        let labeled = reconcile(&tracks, &annotations)?.kept;
        let mut reports = Vec::new();
        for v in self.manifest.videos.keys() {
            reports.push(compute_ssmaxn(&labeled, &self.schedule(v)?));
        }
        Ok((labeled, MaxNReport::merge(reports)))
    }

    /// MaxN under the verdicts given so far, without writing anything.
    pub fn current_maxn(&self, store: &BTreeMap<(String, TrackId), Verdict>) -> Result<MaxNReport> {
        Ok(self.reconciled(store)?.1)
    }

    /// Applies all verdicts, writes labeled detections and `maxn.csv`.
    pub fn finalize(&mut self, store: &BTreeMap<(String, TrackId), Verdict>) -> Result<MaxNReport> {
        let (labeled, report) = self.reconciled(store)?;
        for v in self.manifest.videos.keys() {
            let tracks: Vec<Track> = labeled.iter().filter(|t| t.video_id() == v).cloned().collect();
            let mut buf = Vec::new();
            write_tracked_detections(&mut buf, &tracks).map_err(|e| Error::io(self.video_dir(v), e))?;
            write_atomic(&self.video_dir(v).join(LABELED_FILE), &buf)?;
        }
        write_atomic(&self.root.join(MAXN_FILE), report.to_csv_string().as_bytes())?;
        for e in self.manifest.videos.values_mut() {
            e.complete(Stage::Reconciled)?;
            e.complete(Stage::Maxn)?;
        }
        self.manifest.save(&self.root)?;
        Ok(report)
    }
}

/// Runs detection loading, tracking, post-filtering and image export into
/// `run_dir`, skipping stages an earlier interrupted run already completed.
///
/// `frames` supplies rasters for the track images; scenario input renders
/// its own when none are given.
pub fn analyze(
    input: &AnalyzeInput,
    config: &PipelineConfig,
    run_dir: &Path,
    frames: Option<&dyn FrameStore>,
) -> Result<RunDir> {
    config.validate()?;
    let source = input.source()?;
    let videos = input.videos();
    let mut seen = BTreeSet::new();
    for v in &videos {
        v.validate()?;
        if !seen.insert(v.video_id.clone()) {
            return Err(Error::InvalidArgument(format!("video {:?} given twice", v.video_id)));
        }
    }

    let mut run = if run_dir.join(MANIFEST_FILE).is_file() {
        let run = RunDir::open(run_dir)?;
        if run.manifest.config != *config || run.manifest.input != source {
            return Err(Error::Run(format!(
                "{} holds a run with different inputs or configuration",
                run_dir.display()
            )));
        }
        log::info!("resuming run in {}", run_dir.display());
        run
    } else {
        let non_empty = std::fs::read_dir(run_dir)
            .map(|mut d| d.next().is_some())
            .unwrap_or(false);
        if non_empty {
            return Err(Error::Run(format!("{} is not empty and holds no run", run_dir.display())));
        }
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let manifest = RunManifest {
            run_id: run_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into()),
            config: *config,
            input: source,
            videos: videos
                .iter()
                .map(|m| (m.video_id.clone(), VideoEntry::new(m.clone(), config.fps)))
                .collect(),
        };
        manifest.save(run_dir)?;
        RunDir {
            root: run_dir.to_path_buf(),
            manifest,
        }
    };

    for meta in &videos {
        analyze_video(&mut run, input, meta, frames)?;
    }
    Ok(run)
}

fn analyze_video(run: &mut RunDir, input: &AnalyzeInput, meta: &VideoMeta, frames: Option<&dyn FrameStore>) -> Result<()> {
    let v = meta.video_id.as_str();
    let cfg = run.manifest.config;
    let dir = run.video_dir(v);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let schedule = build_schedule(meta, cfg.fps)?;
    let input_path = dir.join(INPUT_DETECTIONS_FILE);

    if !run.manifest.video(v)?.done(Stage::Detected) {
        let detections = match input {
            AnalyzeInput::Detections(list) => {
                let file = &list.iter().find(|i| i.meta.video_id == v).expect("listed video").detections;
                load_detection_file(file, &schedule, cfg.conf_threshold)?
            }
            AnalyzeInput::Scenario { spec, seed } => synthesize(spec, &schedule, *seed)?
                .frames
                .into_iter()
                .map(|f| f.into_iter().filter(|d| d.confidence >= cfg.conf_threshold).collect())
                .collect(),
        };
        write_detection_file(&input_path, &detections)?;
        mark(run, v, Stage::Detected)?;
    }

    // Later stages always start from the written file so a resumed run
    // sees exactly what an uninterrupted one would.
    let detections = load_detection_file(&input_path, &schedule, 0.0)?;
    let detections: FrameDetections = detections
        .into_iter()
        .map(|f| {
            f.into_iter()
                .map(|mut d| {
                    d.video_id = v.to_string();
                    d
                })
                .collect()
        })
        .collect();

    if !run.manifest.video(v)?.done(Stage::Tracked) {
        let tracks = tracker::run(&detections, &cfg.tracker)?;
        let mut buf = Vec::new();
        write_tracked_detections(&mut buf, &tracks).map_err(|e| Error::io(&dir, e))?;
        write_atomic(&dir.join(TRACKED_FILE), &buf)?;
        mark(run, v, Stage::Tracked)?;
    }

    if !run.manifest.video(v)?.done(Stage::Filtered) {
        let outcome = postfilter::apply(run.tracked(v)?, &cfg.postfilter);
        write_summaries(&dir.join(KEPT_FILE), &outcome.kept)?;
        write_summaries(&dir.join(REMOVED_FILE), &outcome.removed)?;
        log::info!("{v}: kept {} tracks, removed {}", outcome.kept.len(), outcome.removed.len());
        mark(run, v, Stage::Filtered)?;
    }

    if !run.manifest.video(v)?.done(Stage::Exported) {
        let kept = run.kept_tracks(v)?;
        let synthetic;
        let store: Option<&dyn FrameStore> = match (frames, input) {
            (Some(f), _) => Some(f),
            (None, AnalyzeInput::Scenario { .. }) => {
                synthetic = SyntheticFrames::new(meta, detections);
                Some(&synthetic)
            }
            (None, AnalyzeInput::Detections(_)) => None,
        };
        let entry_warnings;
        let images = match store {
            Some(store) => {
                let report = export_track_images(&kept, store, &run.tracks_dir())?;
                entry_warnings = report.warnings;
                let mut ids: Vec<TrackId> = report.written.iter().map(|(_, id, _)| *id).collect();
                ids.sort_unstable();
                ids
            }
            None => {
                let msg = format!("{v}: no frame rasters supplied, track images skipped");
                log::warn!("{msg}");
                entry_warnings = vec![msg];
                Vec::new()
            }
        };
        let entry = run.manifest.videos.get_mut(v).expect("listed video");
        entry.images = images;
        entry.warnings = entry_warnings;
        mark(run, v, Stage::Exported)?;
    }
    Ok(())
}

fn mark(run: &mut RunDir, video_id: &str, stage: Stage) -> Result<()> {
    run.manifest
        .videos
        .get_mut(video_id)
        .expect("listed video")
        .complete(stage)?;
    run.manifest.save(&run.root)
}
