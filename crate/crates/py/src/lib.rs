//! Python bindings: `import bruvs`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bruvs_core::analysis::{compute_ssmaxn, MaxNReport};
use bruvs_core::ingest::{build_schedule, FrameDetections, SamplingSchedule, ScenarioSpec};
use bruvs_core::metrics::{self, MaxNComparison, MotEvalSet, MotFrame, SpeciesComparison};
use bruvs_core::run::{self, AnalyzeInput, AnnotationStore, RunDir};
use bruvs_core::{inpaint as raster, postfilter, tracker, Error};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Coords = (f64, f64, f64, f64);
/// `(x1, y1, x2, y2, confidence)`.
type ScoredBox = (f64, f64, f64, f64, f64);

#[pyclass(name = "BBox", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyBBox(bruvs_core::BBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        bruvs_core::BBox::new(x1, y1, x2, y2).map(PyBBox).map_err(py_err)
    }

    #[getter]
    fn x1(&self) -> f64 {
        self.0.x1
    }
    #[getter]
    fn y1(&self) -> f64 {
        self.0.y1
    }
    #[getter]
    fn x2(&self) -> f64 {
        self.0.x2
    }
    #[getter]
    fn y2(&self) -> f64 {
        self.0.y2
    }

    fn center(&self) -> (f64, f64) {
        self.0.center()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn iou(&self, other: &PyBBox) -> f64 {
        bruvs_core::iou(&self.0, &other.0)
    }

    fn __repr__(&self) -> String {
        let b = &self.0;
        format!("BBox({}, {}, {}, {})", b.x1, b.y1, b.x2, b.y2)
    }
}

#[pyfunction]
fn iou(a: &PyBBox, b: &PyBBox) -> f64 {
    bruvs_core::iou(&a.0, &b.0)
}

/// Sampled frames of one video.
#[pyclass(name = "Schedule", frozen, from_py_object)]
#[derive(Clone)]
struct PySchedule(SamplingSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (video_id, duration_ms, width, height, fps = 3.0))]
    fn new(video_id: &str, duration_ms: i64, width: u32, height: u32, fps: f64) -> PyResult<Self> {
        let meta = bruvs_core::VideoMeta::new(video_id, duration_ms, width, height).map_err(py_err)?;
        build_schedule(&meta, fps).map(PySchedule).map_err(py_err)
    }

    #[getter]
    fn video_id(&self) -> &str {
        &self.0.video.video_id
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.0.fps
    }

    /// `(frame_index, time_ms)` pairs.
    #[getter]
    fn frames(&self) -> Vec<(u64, i64)> {
        self.0.frames.iter().map(|f| (f.frame_index, f.time_ms)).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Track", from_py_object)]
#[derive(Clone)]
struct PyTrack(bruvs_core::Track);

#[pymethods]
impl PyTrack {
    #[getter]
    fn track_id(&self) -> u64 {
        self.0.track_id
    }

    /// `(frame_index, time_ms, (x1, y1, x2, y2), confidence)` per detection.
    #[getter]
    fn detections(&self) -> Vec<(u64, i64, Coords, f64)> {
        self.0
            .detections
            .iter()
            .map(|d| (d.frame_index, d.time_ms, (d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2), d.confidence))
            .collect()
    }

    #[getter]
    fn span_s(&self) -> f64 {
        bruvs_core::track_span_s(&self.0)
    }

    #[getter]
    fn max_displacement(&self) -> f64 {
        bruvs_core::track_max_center_displacement(&self.0)
    }

    #[getter]
    fn max_confidence(&self) -> f64 {
        self.0.max_confidence()
    }

    #[getter]
    fn label(&self) -> Option<&str> {
        self.0.label.as_ref().map(|l| l.as_str())
    }

    /// Setting a species clears rejection.
    #[setter]
    fn set_label(&mut self, label: Option<&str>) -> PyResult<()> {
        self.0.label = label.map(bruvs_core::SpeciesLabel::new).transpose().map_err(py_err)?;
        if self.0.label.is_some() {
            self.0.rejected = false;
        }
        Ok(())
    }

    #[getter]
    fn rejected(&self) -> bool {
        self.0.rejected
    }

    /// Rejecting clears the label.
    #[setter]
    fn set_rejected(&mut self, rejected: bool) {
        self.0.rejected = rejected;
        if rejected {
            self.0.label = None;
        }
    }

    fn __len__(&self) -> usize {
        self.0.detections.len()
    }

    fn __repr__(&self) -> String {
        format!("Track(id={}, detections={})", self.0.track_id, self.0.detections.len())
    }
}

/// Tracking and post-filter thresholds plus the sampling rate.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone, Default)]
struct PyConfig(run::PipelineConfig);

#[pymethods]
impl PyConfig {
    /// Keyword arguments override defaults, e.g. `Config(keep_conf=0.8)`.
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = run::PipelineConfig::default();
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, v.extract::<f64>()?).map_err(py_err)?;
            }
        }
        cfg.validate().map_err(py_err)?;
        Ok(PyConfig(cfg))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        run::PipelineConfig::from_toml(text).map(PyConfig).map_err(py_err)
    }

    fn to_dict(&self) -> BTreeMap<&'static str, f64> {
        run::describe(&self.0)
    }

    fn __getitem__(&self, key: &str) -> PyResult<f64> {
        let key = key.rsplit('.').next().unwrap_or(key);
        run::describe(&self.0)
            .get(key)
            .copied()
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter {key:?}")))
    }
}

/// Runs the tracker over per-frame detections. `frames[i]` holds
/// `(x1, y1, x2, y2, confidence)` tuples for sampled frame `i`; detections
/// below the config's confidence threshold are dropped first.
#[pyfunction]
#[pyo3(signature = (schedule, frames, config = None))]
fn track(schedule: &PySchedule, frames: Vec<Vec<ScoredBox>>, config: Option<&PyConfig>) -> PyResult<Vec<PyTrack>> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let sched = &schedule.0;
    if frames.len() != sched.len() {
        return Err(PyValueError::new_err(format!(
            "{} frames of detections for a schedule of {}",
            frames.len(),
            sched.len()
        )));
    }
    let mut detections: FrameDetections = Vec::with_capacity(frames.len());
    for (f, boxes) in sched.frames.iter().zip(frames) {
        let mut row = Vec::new();
        for (x1, y1, x2, y2, confidence) in boxes {
            if confidence < cfg.conf_threshold {
                continue;
            }
            row.push(bruvs_core::Detection {
                video_id: sched.video.video_id.clone(),
                frame_index: f.frame_index,
                time_ms: f.time_ms,
                bbox: bruvs_core::BBox::new(x1, y1, x2, y2).map_err(py_err)?,
                confidence,
            });
        }
        detections.push(row);
    }
    let tracks = tracker::run(&detections, &cfg.tracker).map_err(py_err)?;
    Ok(tracks.into_iter().map(PyTrack).collect())
}

/// Splits tracks into `(kept, removed)`.
#[pyfunction]
#[pyo3(signature = (tracks, config = None))]
fn post_filter(tracks: Vec<PyTrack>, config: Option<&PyConfig>) -> (Vec<PyTrack>, Vec<PyTrack>) {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let out = postfilter::apply(tracks.into_iter().map(|t| t.0).collect(), &cfg.postfilter);
    (
        out.kept.into_iter().map(PyTrack).collect(),
        out.removed.into_iter().map(PyTrack).collect(),
    )
}

/// Species-specific MaxN as `(video_id, species, maxn, frame_index, time_ms)`
/// rows. Rejected tracks are ignored; unlabeled ones count as `unclassified`.
#[pyfunction]
fn ssmaxn(tracks: Vec<PyTrack>, schedule: &PySchedule) -> Vec<(String, String, u32, u64, i64)> {
    let tracks: Vec<_> = tracks.into_iter().map(|t| t.0).collect();
    compute_ssmaxn(&tracks, &schedule.0)
        .rows
        .into_iter()
        .map(|r| (r.video_id, r.species, r.maxn, r.frame_index_at_max, r.time_ms_at_max))
        .collect()
}

/// `(precision, recall, f1)`.
#[pyfunction]
fn precision_recall_f1(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let pr = metrics::precision_recall_f1(tp, fp, fn_);
    (pr.precision, pr.recall, pr.f1)
}

/// All-points AP of predictions already sorted by descending confidence.
#[pyfunction]
fn average_precision(hits: Vec<bool>, ground_truth: usize) -> f64 {
    metrics::average_precision(&hits, ground_truth)
}

/// `videos` maps video id to `(species, predicted, truth)` triples.
/// Returns `(mean, sd, {video_id: accuracy})`.
#[pyfunction]
fn maxn_accuracy(
    videos: BTreeMap<String, Vec<(String, u32, u32)>>,
) -> (Option<f64>, Option<f64>, BTreeMap<String, f64>) {
    let cmp = MaxNComparison {
        videos: videos
            .into_iter()
            .map(|(v, rows)| {
                let rows = rows
                    .into_iter()
                    .map(|(species, predicted, truth)| SpeciesComparison { species, predicted, truth })
                    .collect();
                (v, rows)
            })
            .collect(),
    };
    let acc = metrics::maxn_accuracy(&cmp);
    let per_video = acc.per_video.into_iter().map(|v| (v.video_id, v.accuracy)).collect();
    (acc.mean, acc.sd, per_video)
}

type MotBoxes = Vec<(u64, Coords)>;

/// CLEAR-MOT over frames of `(ground_truth, predictions)`, each a list of
/// `(object_id, (x1, y1, x2, y2))`.
#[pyfunction]
#[pyo3(signature = (frames, iou_threshold = 0.5))]
fn mota(py: Python<'_>, frames: Vec<(MotBoxes, MotBoxes)>, iou_threshold: f64) -> PyResult<Bound<'_, PyDict>> {
    let to_boxes = |v: MotBoxes| -> PyResult<Vec<(u64, bruvs_core::BBox)>> {
        v.into_iter()
            .map(|(id, (x1, y1, x2, y2))| Ok((id, bruvs_core::BBox::new(x1, y1, x2, y2).map_err(py_err)?)))
            .collect()
    };
    let frames = frames
        .into_iter()
        .map(|(gt, pred)| Ok(MotFrame { ground_truth: to_boxes(gt)?, predictions: to_boxes(pred)? }))
        .collect::<PyResult<Vec<_>>>()?;
    let s = metrics::mota(&MotEvalSet { frames, iou_threshold }).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mota", s.mota)?;
    d.set_item("fp", s.fp)?;
    d.set_item("fn", s.fn_)?;
    d.set_item("idsw", s.idsw)?;
    d.set_item("gt_count", s.gt_count)?;
    Ok(d)
}

fn raster_image(width: u32, height: u32, pixels: &[u8]) -> PyResult<raster::RasterImage> {
    raster::RasterImage::new(width, height, pixels.to_vec()).map_err(py_err)
}

/// Fills bright blobs of a row-major RGB buffer with black and returns the
/// new buffer.
#[pyfunction]
#[pyo3(signature = (width, height, pixels, threshold = raster::DEFAULT_THRESHOLD))]
fn inpaint(width: u32, height: u32, pixels: &[u8], threshold: u8) -> PyResult<Vec<u8>> {
    Ok(raster::inpaint(&raster_image(width, height, pixels)?, threshold).pixels)
}

/// Bounding rectangles `(top, left, bottom, right)` of bright components.
#[pyfunction]
#[pyo3(signature = (width, height, pixels, threshold = raster::DEFAULT_THRESHOLD))]
fn bright_components(width: u32, height: u32, pixels: &[u8], threshold: u8) -> PyResult<Vec<(u32, u32, u32, u32)>> {
    Ok(raster::find_bright_components(&raster_image(width, height, pixels)?, threshold)
        .into_iter()
        .map(|r| (r.top, r.left, r.bottom, r.right))
        .collect())
}

/// Runs a synthetic scenario through detection, tracking, filtering and
/// image export into `out_dir`. Returns the video ids.
#[pyfunction]
#[pyo3(signature = (scenario, out_dir, seed = 0, config = None))]
fn analyze_scenario(scenario: PathBuf, out_dir: PathBuf, seed: u64, config: Option<&PyConfig>) -> PyResult<Vec<String>> {
    let spec = ScenarioSpec::load(&scenario).map_err(py_err)?;
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let run = run::analyze(&AnalyzeInput::Scenario { spec, seed }, &cfg, &out_dir, None).map_err(py_err)?;
    Ok(run.manifest().videos.keys().cloned().collect())
}

/// Applies reviewed verdicts (renamed images and the annotation store) and
/// writes the MaxN report. Returns its CSV text.
#[pyfunction]
fn finalize(run_dir: PathBuf) -> PyResult<String> {
    let mut run = RunDir::open(&run_dir).map_err(py_err)?;
    let store = AnnotationStore::open(&run_dir).map_err(py_err)?;
    run.finalize(&store.latest()).map(|r: MaxNReport| r.to_csv_string()).map_err(py_err)
}

#[pymodule]
fn bruvs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBBox>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyTrack>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(post_filter, m)?)?;
    m.add_function(wrap_pyfunction!(ssmaxn, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_f1, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(maxn_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(mota, m)?)?;
    m.add_function(wrap_pyfunction!(inpaint, m)?)?;
    m.add_function(wrap_pyfunction!(bright_components, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(finalize, m)?)?;
    Ok(())
}
