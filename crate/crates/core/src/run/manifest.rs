use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TrackId, VideoMeta};
use crate::run::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Pipeline stages in the order they complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detected,
    Tracked,
    Filtered,
    Exported,
    Reconciled,
    Maxn,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Detected,
        Stage::Tracked,
        Stage::Filtered,
        Stage::Exported,
        Stage::Reconciled,
        Stage::Maxn,
    ];
}

/// Where a run's detections came from; used to refuse resuming a run
/// directory with different inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    Detections { files: BTreeMap<String, String> },
    Scenario { scenario: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub meta: VideoMeta,
    pub fps: f64,
    /// Completed stages, in pipeline order.
    pub stages: Vec<Stage>,
    /// Kept tracks whose representative image was written.
    #[serde(default)]
    pub images: Vec<TrackId>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl VideoEntry {
    pub fn new(meta: VideoMeta, fps: f64) -> Self {
        VideoEntry {
            meta,
            fps,
            stages: Vec::new(),
            images: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn done(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Marks `stage` complete; the previous stage must already be.
    pub fn complete(&mut self, stage: Stage) -> Result<()> {
        let pos = Stage::ALL.iter().position(|s| *s == stage).expect("listed stage");
        if pos > 0 && !self.done(Stage::ALL[pos - 1]) {
            return Err(Error::Run(format!(
                "{}: stage {stage:?} before {:?}",
                self.meta.video_id,
                Stage::ALL[pos - 1]
            )));
        }
        if !self.done(stage) {
            self.stages.push(stage);
        }
        Ok(())
    }

    /// Forgets `stage` and everything after it.
    pub fn reset_from(&mut self, stage: Stage) {
        self.stages.retain(|s| *s < stage);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: PipelineConfig,
    pub input: InputSource,
    pub videos: BTreeMap<String, VideoEntry>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Run(format!("{}: {e}", path.display())))
    }

    /// Writes via a temporary file and rename so readers never see a
    /// half-written manifest.
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let tmp = run_dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn video(&self, video_id: &str) -> Result<&VideoEntry> {
        self.videos
            .get(video_id)
            .ok_or_else(|| Error::Run(format!("unknown video {video_id:?}")))
    }

    pub fn all_done(&self, stage: Stage) -> bool {
        self.videos.values().all(|v| v.done(stage))
    }
}
