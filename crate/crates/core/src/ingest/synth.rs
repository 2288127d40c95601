//! Scripted scenarios: actors with known identities and species plus
//! false-positive emitters, for exercising the pipeline end to end with
//! exact ground truth.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! [video]
//! video_id = "reef01"
//! duration_ms = 20000
//! frame_width_px = 1280
//! frame_height_px = 720
//!
//! [[actors]]
//! species = "carcharhinus_perezi"
//! entry_ms = 0
//! exit_ms = 8000
//! start_center = [0.1, 0.4]   # box center at entry
//! velocity = [0.08, 0.0]      # normalized units per second
//! size = [0.12, 0.06]
//! confidence = 0.85
//! confidence_jitter = 0.05    # optional, uniform +/- around confidence
//! missed = [[3000, 4000]]     # optional, detector misses in [start, end)
//!
//! [[clutter]]
//! kind = "static"             # stuck object, e.g. algae
//! center = [0.8, 0.85]
//! size = [0.05, 0.05]
//! confidence = 0.4
//!
//! [[clutter]]
//! kind = "noise"              # one-off spurious boxes
//! rate = 0.1                  # probability per sampled frame
//! size = [0.04, 0.04]
//! confidence = [0.2, 0.6]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{MaxNReport, MaxNRow};
use crate::error::{Error, Result};
use crate::ingest::{DetectorBackend, FrameDetections, SamplingSchedule};
use crate::model::{BBox, Detection, SpeciesLabel, Track, TrackStatus, VideoMeta};

const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub species: SpeciesLabel,
    pub entry_ms: i64,
    pub exit_ms: i64,
    pub start_center: [f64; 2],
    pub velocity: [f64; 2],
    pub size: [f64; 2],
    pub confidence: f64,
    #[serde(default)]
    pub confidence_jitter: f64,
    #[serde(default)]
    pub missed: Vec<[i64; 2]>,
}

impl Actor {
    pub fn present_at(&self, time_ms: i64) -> bool {
        self.entry_ms <= time_ms && time_ms < self.exit_ms
    }

    pub fn detected_at(&self, time_ms: i64) -> bool {
        self.present_at(time_ms) && !self.missed.iter().any(|[a, b]| *a <= time_ms && time_ms < *b)
    }

    pub fn box_at(&self, time_ms: i64) -> BBox {
        let dt = (time_ms - self.entry_ms) as f64 / 1000.0;
        BBox::from_center(
            self.start_center[0] + self.velocity[0] * dt,
            self.start_center[1] + self.velocity[1] * dt,
            self.size[0],
            self.size[1],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Clutter {
    Static {
        center: [f64; 2],
        size: [f64; 2],
        confidence: f64,
        #[serde(default)]
        confidence_jitter: f64,
        #[serde(default)]
        start_ms: Option<i64>,
        #[serde(default)]
        end_ms: Option<i64>,
    },
    Noise {
        rate: f64,
        size: [f64; 2],
        confidence: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub video: VideoMeta,
    #[serde(default)]
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub clutter: Vec<Clutter>,
}

fn inside_unit(b: &BBox) -> bool {
    b.x1 >= -EDGE_TOL && b.y1 >= -EDGE_TOL && b.x2 <= 1.0 + EDGE_TOL && b.y2 <= 1.0 + EDGE_TOL
}

fn check_conf(what: &str, c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Scenario(format!("{what}: confidence {c} outside [0,1]")))
    }
}

fn check_size(what: &str, size: [f64; 2]) -> Result<()> {
    if size.iter().all(|s| *s > 0.0 && *s <= 1.0) {
        Ok(())
    } else {
        Err(Error::Scenario(format!("{what}: size {size:?} must be in (0,1]")))
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        for (i, a) in self.actors.iter().enumerate() {
            let what = format!("actor {i} ({})", a.species);
            if a.entry_ms >= a.exit_ms {
                return Err(Error::Scenario(format!("{what}: entry_ms must be < exit_ms")));
            }
            check_size(&what, a.size)?;
            check_conf(&what, a.confidence)?;
            if a.confidence_jitter < 0.0 {
                return Err(Error::Scenario(format!("{what}: negative confidence_jitter")));
            }
            // linear motion: extremes are at the ends of the lifetime
            for t in [a.entry_ms, a.exit_ms] {
                if !inside_unit(&a.box_at(t)) {
                    return Err(Error::Scenario(format!(
                        "{what}: box leaves the frame at {t} ms"
                    )));
                }
            }
        }
        for (i, c) in self.clutter.iter().enumerate() {
            let what = format!("clutter {i}");
            match c {
                Clutter::Static {
                    center,
                    size,
                    confidence,
                    ..
                } => {
                    check_size(&what, *size)?;
                    check_conf(&what, *confidence)?;
                    if !inside_unit(&BBox::from_center(center[0], center[1], size[0], size[1])) {
                        return Err(Error::Scenario(format!("{what}: box outside the frame")));
                    }
                }
                Clutter::Noise {
                    rate,
                    size,
                    confidence,
                } => {
                    check_size(&what, *size)?;
                    check_conf(&what, confidence[0])?;
                    check_conf(&what, confidence[1])?;
                    if confidence[0] > confidence[1] || !(0.0..=1.0).contains(rate) {
                        return Err(Error::Scenario(format!("{what}: bad rate or confidence range")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every species that appears among the actors, sorted.
    pub fn species(&self) -> Vec<SpeciesLabel> {
        let mut s: Vec<SpeciesLabel> = self.actors.iter().map(|a| a.species.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

fn jittered(rng: &mut ChaCha8Rng, base: f64, jitter: f64) -> f64 {
    if jitter > 0.0 {
        (base + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0)
    } else {
        base
    }
}

/// Deterministic detector stand-in driven by a scenario. The output of a
/// frame depends only on `(seed, frame_index, time_ms)`.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    spec: ScenarioSpec,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(spec: ScenarioSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(SyntheticBackend { spec, seed })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }
}

impl DetectorBackend for SyntheticBackend {
    fn detect(&self, _video_id: &str, frame_index: u64, time_ms: i64) -> Vec<(BBox, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame_index);
        let mut out = Vec::new();
        for a in &self.spec.actors {
            // draw even when missed so other emitters keep their random stream
            let conf = jittered(&mut rng, a.confidence, a.confidence_jitter);
            if a.detected_at(time_ms) {
                out.push((a.box_at(time_ms), conf));
            }
        }
        for c in &self.spec.clutter {
            match c {
                Clutter::Static {
                    center,
                    size,
                    confidence,
                    confidence_jitter,
                    start_ms,
                    end_ms,
                } => {
                    let conf = jittered(&mut rng, *confidence, *confidence_jitter);
                    let on = start_ms.is_none_or(|s| s <= time_ms) && end_ms.is_none_or(|e| time_ms < e);
                    if on {
                        out.push((BBox::from_center(center[0], center[1], size[0], size[1]), conf));
                    }
                }
                Clutter::Noise {
                    rate,
                    size,
                    confidence,
                } => {
                    let fire = rng.random_bool(*rate);
                    let cx = rng.random_range(size[0] / 2.0..=1.0 - size[0] / 2.0);
                    let cy = rng.random_range(size[1] / 2.0..=1.0 - size[1] / 2.0);
                    let conf = rng.random_range(confidence[0]..=confidence[1]);
                    if fire {
                        out.push((BBox::from_center(cx, cy, size[0], size[1]), conf));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub frames: FrameDetections,
    /// One track per actor, `track_id = actor index + 1`, labeled with its species.
    pub ground_truth: Vec<Track>,
    pub maxn: MaxNReport,
}

pub fn synthesize(spec: &ScenarioSpec, schedule: &SamplingSchedule, seed: u64) -> Result<Synthesized> {
    let backend = SyntheticBackend::new(spec.clone(), seed)?;
    let video_id = &schedule.video.video_id;
    let frames = crate::ingest::collect_frames(&backend, schedule, 0.0);

    let mut ground_truth = Vec::new();
    for (i, a) in spec.actors.iter().enumerate() {
        let detections: Vec<Detection> = schedule
            .frames
            .iter()
            .filter(|f| a.present_at(f.time_ms))
            .map(|f| Detection {
                video_id: video_id.clone(),
                frame_index: f.frame_index,
                time_ms: f.time_ms,
                bbox: a.box_at(f.time_ms),
                confidence: 1.0,
            })
            .collect();
        if detections.is_empty() {
            continue;
        }
        ground_truth.push(Track {
            track_id: i as u64 + 1,
            detections,
            status: TrackStatus::Finished,
            label: Some(a.species.clone()),
            rejected: false,
        });
    }

    let mut rows = Vec::new();
    for species in spec.species() {
        let mut best: Option<MaxNRow> = None;
        for f in &schedule.frames {
            let n = spec
                .actors
                .iter()
                .filter(|a| a.species == species && a.present_at(f.time_ms))
                .count() as u32;
            if n > 0 && best.as_ref().is_none_or(|b| n > b.maxn) {
                best = Some(MaxNRow {
                    video_id: video_id.clone(),
                    species: species.to_string(),
                    maxn: n,
                    frame_index_at_max: f.frame_index,
                    time_ms_at_max: f.time_ms,
                });
            }
        }
        rows.extend(best);
    }

    Ok(Synthesized {
        frames,
        ground_truth,
        maxn: MaxNReport::new(rows),
    })
}

/// Per-species actor counts for a scenario at one instant.
pub fn actors_present(spec: &ScenarioSpec, time_ms: i64) -> BTreeMap<SpeciesLabel, u32> {
    let mut counts = BTreeMap::new();
    for a in spec.actors.iter().filter(|a| a.present_at(time_ms)) {
        *counts.entry(a.species.clone()).or_insert(0) += 1;
    }
    counts
}
