//! Run directories: the on-disk unit of an analysis.
//!
//! ```text
//! <run>/manifest.json                     stages, config snapshot, videos
//! <run>/videos/<v>/input_detections.csv   detections after the confidence threshold
//! <run>/videos/<v>/detections.csv         tracked detections (label empty)
//! <run>/videos/<v>/tracks_kept.csv        post-filter survivors
//! <run>/videos/<v>/tracks_removed.csv     tracks judged false positives
//! <run>/tracks/<v>/<track_id>.jpg         one image per kept track, for review
//! <run>/annotations.jsonl                 verdicts given through the HTTP API
//! <run>/videos/<v>/detections_labeled.csv after finalize
//! <run>/maxn.csv                          after finalize
//! ```

mod config;
mod manifest;
mod pipeline;
mod store;
mod tune;

pub use config::PipelineConfig;
pub use manifest::{InputSource, RunManifest, Stage, VideoEntry, MANIFEST_FILE};
pub use pipeline::{
    analyze, read_summaries, AnalyzeInput, RunDir, SyntheticFrames, TrackSummary, VideoInput, INPUT_DETECTIONS_FILE,
    KEPT_FILE, LABELED_FILE, MAXN_FILE, REMOVED_FILE, TRACKED_FILE, TRACKS_DIR, VIDEOS_DIR,
};
pub use store::{latest_verdicts, AnnotationRecord, AnnotationStore, STORE_FILE};
pub use tune::{describe, evaluate_config, tune, LabeledSequence};
