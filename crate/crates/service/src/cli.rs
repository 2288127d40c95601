use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use bruvs_core::analysis::{DirFrameStore, FrameStore, MaxNReport};
use bruvs_core::inpaint::{inpaint_dir, DEFAULT_THRESHOLD};
use bruvs_core::ingest::ScenarioSpec;
use bruvs_core::metrics::{
    map50, maxn_accuracy, mota, read_detection_eval, read_ground_truth_mot, read_truth_maxn, GridSpec, MaxNComparison,
    MotEvalSet, MotSummary,
};
use bruvs_core::run::{self, AnalyzeInput, AnnotationStore, LabeledSequence, PipelineConfig, RunDir, VideoInput};
use bruvs_core::tracker::{read_tracked_detections, tracks_from_rows};
use bruvs_core::{Error, Result, Track, VideoMeta};

#[derive(Debug, Parser)]
#[command(name = "bruvs", version, about = "MaxN counts from stationary underwater video detections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track and filter detections into a run directory.
    Analyze(AnalyzeArgs),
    /// Apply expert verdicts and write maxn.csv.
    Finalize {
        run: PathBuf,
    },
    /// Score predictions against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Grid-search tracker and filter parameters for MOTA.
    Tune(TuneArgs),
    /// Black out bright burned-in text in every image of a directory.
    Inpaint {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u8,
    },
    /// Serve the review API for a run.
    Serve {
        run: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

/// Config file plus flag overrides, shared by `analyze` and `tune`.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    #[arg(long)]
    pub min_span_s: Option<f64>,
    #[arg(long)]
    pub min_displacement: Option<f64>,
    #[arg(long)]
    pub keep_conf: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let overrides: Vec<(String, f64)> = [
            ("fps", self.fps),
            ("conf_threshold", self.conf_threshold),
            ("min_span_s", self.min_span_s),
            ("min_displacement", self.min_displacement),
            ("keep_conf", self.keep_conf),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
        base.with_params(&overrides)
    }
}

/// Where the detections come from: a scenario file, detection files, or a
/// video list.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Synthetic scenario (TOML).
    #[arg(long, conflicts_with_all = ["detections", "videos"])]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Detection file(s); the video id is the file stem.
    #[arg(long, num_args = 1.., requires = "duration_ms")]
    pub detections: Vec<PathBuf>,
    /// Video length, for --detections.
    #[arg(long)]
    pub duration_ms: Option<i64>,
    #[arg(long, default_value_t = 1920)]
    pub width: u32,
    #[arg(long, default_value_t = 1080)]
    pub height: u32,
    /// CSV `video_id,duration_ms,frame_width_px,frame_height_px,detections`,
    /// detection paths relative to the CSV.
    #[arg(long, conflicts_with = "detections")]
    pub videos: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct VideoListRow {
    video_id: String,
    duration_ms: i64,
    frame_width_px: u32,
    frame_height_px: u32,
    detections: PathBuf,
}

impl SourceArgs {
    fn video_inputs(&self) -> Result<Vec<VideoInput>> {
        if let Some(list) = &self.videos {
            let base = list.parent().unwrap_or(Path::new("."));
            let mut rdr = csv::Reader::from_path(list).map_err(|e| Error::InvalidArgument(format!("{}: {e}", list.display())))?;
            let mut out = Vec::new();
            for row in rdr.deserialize() {
                let row: VideoListRow = row.map_err(|e| Error::InvalidArgument(format!("{}: {e}", list.display())))?;
                out.push(VideoInput {
                    meta: VideoMeta::new(row.video_id, row.duration_ms, row.frame_width_px, row.frame_height_px)?,
                    detections: base.join(row.detections),
                });
            }
            return Ok(out);
        }
        let duration = self.duration_ms.unwrap_or(0);
        self.detections
            .iter()
            .map(|p| {
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Error::InvalidArgument(format!("{}: no file name", p.display())))?;
                Ok(VideoInput {
                    meta: VideoMeta::new(id, duration, self.width, self.height)?,
                    detections: p.clone(),
                })
            })
            .collect()
    }

    fn input(&self) -> Result<AnalyzeInput> {
        match &self.scenario {
            Some(path) => Ok(AnalyzeInput::Scenario {
                spec: ScenarioSpec::load(path)?,
                seed: self.seed,
            }),
            None => {
                let videos = self.video_inputs()?;
                if videos.is_empty() {
                    return Err(Error::InvalidArgument("give --scenario, --detections or --videos".into()));
                }
                Ok(AnalyzeInput::Detections(videos))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Pre-extracted frames as `<dir>/<video_id>/<frame_index>.{ppm,png,jpg}`.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// MaxN accuracy of a report against `video_id,species,maxn` truth.
    Maxn {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Precision, recall, F1 and mAP50 of detections.
    Det {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// CLEAR-MOT accuracy of a run's kept tracks or a tracked detection file.
    Mot {
        #[arg(long, conflicts_with = "tracked")]
        run: Option<PathBuf>,
        #[arg(long)]
        tracked: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Grid file (TOML `[[axis]] name, values`).
    #[arg(long)]
    pub grid: PathBuf,
    /// Labeled scenarios; repeat for several.
    #[arg(long, num_args = 1..)]
    pub scenario: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Detection file with a ground-truth MOT file (`--truth`).
    #[arg(long, requires_all = ["truth", "duration_ms"])]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub duration_ms: Option<i64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Where to write the full result table (CSV); stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn open_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn mot_by_video(truth: &BTreeMap<String, Vec<Track>>, predicted: &BTreeMap<String, Vec<Track>>, iou: f64) -> Result<MotSummary> {
    let videos: std::collections::BTreeSet<&String> = truth.keys().chain(predicted.keys()).collect();
    let mut parts = Vec::new();
    for v in videos {
        let gt = truth.get(v).map(Vec::as_slice).unwrap_or(&[]);
        let pred = predicted.get(v).map(Vec::as_slice).unwrap_or(&[]);
        let frames = gt
            .iter()
            .chain(pred)
            .map(|t| t.last().frame_index as usize + 1)
            .max()
            .unwrap_or(0);
        let set = MotEvalSet::from_tracks(gt, pred, frames, iou);
        match mota(&set) {
            Ok(s) => parts.push(s),
            Err(Error::UndefinedMetric(_)) => parts.push(MotSummary {
                mota: 0.0,
                fp: pred.iter().map(|t| t.detections.len() as u64).sum(),
                fn_: 0,
                idsw: 0,
                gt_count: 0,
                matches: 0,
            }),
            Err(e) => return Err(e),
        }
    }
    MotSummary::combine(&parts)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => {
            let config = args.config.resolve()?;
            let input = args.source.input()?;
            let store = args.frames.as_ref().map(DirFrameStore::new);
            let run = run::analyze(&input, &config, &args.out, store.as_ref().map(|s| s as &dyn FrameStore))?;
            for (v, e) in &run.manifest().videos {
                let kept = run.kept_summaries(v)?.len();
                println!("{v}: {kept} kept tracks, {} images", e.images.len());
                for w in &e.warnings {
                    eprintln!("warning: {w}");
                }
            }
            println!("run written to {}", args.out.display());
        }
        Command::Finalize { run } => {
            let store = AnnotationStore::open(&run)?;
            let mut dir = RunDir::open(&run)?;
            for w in dir.filesystem_annotations()?.warnings {
                eprintln!("warning: {w}");
            }
            let report = dir.finalize(&store.latest())?;
            print!("{}", report.to_csv_string());
        }
        Command::Eval(EvalCommand::Maxn { pred, truth }) => {
            let predicted = MaxNReport::read_csv(open_file(&pred)?, &pred.display().to_string())?;
            let truth_rows = read_truth_maxn(open_file(&truth)?, &truth.display().to_string())?;
            let acc = maxn_accuracy(&MaxNComparison::from_reports(&predicted, &truth_rows));
            for w in &acc.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&serde_json::to_value(&acc)?);
        }
        Command::Eval(EvalCommand::Det { pred, truth, iou }) => {
            let set = read_detection_eval(
                open_file(&truth)?,
                &truth.display().to_string(),
                open_file(&pred)?,
                &pred.display().to_string(),
                iou,
            )?;
            let report = map50(&set)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&serde_json::to_value(&report)?);
        }
        Command::Eval(EvalCommand::Mot { run, tracked, truth, iou }) => {
            let gt = read_ground_truth_mot(open_file(&truth)?, &truth.display().to_string())?;
            let mut predicted: BTreeMap<String, Vec<Track>> = BTreeMap::new();
            match (run, tracked) {
                (Some(run), _) => {
                    let dir = RunDir::open(&run)?;
                    for v in dir.manifest().videos.keys() {
                        predicted.insert(v.clone(), dir.kept_tracks(v)?);
                    }
                }
                (None, Some(path)) => {
                    let rows = read_tracked_detections(open_file(&path)?, &path.display().to_string())?;
                    for t in tracks_from_rows(rows) {
                        predicted.entry(t.video_id().to_string()).or_default().push(t);
                    }
                }
                (None, None) => return Err(Error::InvalidArgument("give --run or --tracked".into())),
            }
            let s = mot_by_video(&gt, &predicted, iou)?;
            print_json(&serde_json::to_value(s)?);
        }
        Command::Tune(args) => {
            let base = args.config.resolve()?;
            let grid = GridSpec::load(&args.grid)?;
            let mut sequences = Vec::new();
            for path in &args.scenario {
                sequences.push(LabeledSequence::from_scenario(&ScenarioSpec::load(path)?, base.fps, args.seed)?);
            }
            if let (Some(det), Some(truth), Some(duration)) = (&args.detections, &args.truth, args.duration_ms) {
                let id = det.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let meta = VideoMeta::new(id, duration, 1920, 1080)?;
                sequences.push(LabeledSequence::from_files(&meta, base.fps, det, truth)?);
            }
            if sequences.is_empty() {
                return Err(Error::InvalidArgument("give --scenario or --detections with --truth".into()));
            }
            let (result, best) = run::tune(&grid, &base, &sequences)?;
            let mut table = Vec::new();
            result.write_table(&mut table).map_err(|e| Error::Run(e.to_string()))?;
            match &args.out {
                Some(p) => std::fs::write(p, &table).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?,
                None => print!("{}", String::from_utf8_lossy(&table)),
            }
            for row in result.failures() {
                eprintln!(
                    "warning: cell {} failed: {}",
                    bruvs_core::metrics::format_cell(&row.params),
                    row.outcome.as_ref().unwrap_err()
                );
            }
            match (result.best_row(), best) {
                (Some(row), Some(cfg)) => {
                    let s = row.outcome.as_ref().expect("best cell succeeded");
                    eprintln!("best: {} (mota {:.6}, idsw {})", bruvs_core::metrics::format_cell(&row.params), s.mota, s.idsw);
                    eprintln!("{}", json!({ "tracker": cfg.tracker, "postfilter": cfg.postfilter }));
                }
                _ => return Err(Error::Run("every grid cell failed".into())),
            }
        }
        Command::Inpaint { input, output, threshold } => {
            let written = inpaint_dir(&input, &output, threshold)?;
            println!("{} images written to {}", written.len(), output.display());
        }
        Command::Serve { run, port, host } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Run(e.to_string()))?;
            rt.block_on(crate::api::serve(&run, SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}
