//! JSON HTTP API over a run directory, used by the review UI.
//!
//! | Method | Path | Body / response |
//! |---|---|---|
//! | GET | `/api/videos` | `[{video_id, tracks, reviewed, labeled, rejected, images}]` |
//! | GET | `/api/videos/{v}/tracks` | `[TrackView]` |
//! | GET | `/api/tracks/{v}/{id}` | `TrackView` |
//! | GET | `/api/tracks/{v}/{id}/image` | JPEG bytes |
//! | PUT | `/api/tracks/{v}/{id}/annotation` | `{"verdict":"labeled","species":"x"}` or `{"verdict":"rejected"}` |
//! | GET | `/api/videos/{v}/maxn` | `{"rows":[MaxNRow]}`; `?format=csv` gives the report file bytes |
//! | GET | `/api/species` | species list from `<run>/species.txt`, one per line |
//!
//! `TrackView` is `{video_id, track_id, first_frame, last_frame, detections,
//! span_s, max_displacement, max_confidence, image_url, verdict}` where
//! `verdict` is `null` or `{"verdict":..., "species":...}`.
//!
//! Errors are `{"error": message, "fields": {name: problem}}` with status
//! 404 (unknown video or track), 400 (malformed body), 422 (species not
//! matching `[a-z0-9_]+`) or 409 (renamed file and API disagree).

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use bruvs_core::analysis::{Annotation, MaxNRow, Verdict};
use bruvs_core::run::{AnnotationStore, RunDir, Stage, TrackSummary};
use bruvs_core::{Error, SpeciesLabel, TrackId};

struct VideoTracks {
    summaries: BTreeMap<TrackId, TrackSummary>,
}

pub struct AppState {
    run: RunDir,
    videos: BTreeMap<String, VideoTracks>,
    store: Mutex<AnnotationStore>,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    fields: Map<String, Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            fields: Map::new(),
        }
    }

    fn field(mut self, name: &str, problem: impl Into<String>) -> Self {
        self.fields.insert(name.to_string(), Value::String(problem.into()));
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ConflictingVerdicts(_) => StatusCode::CONFLICT,
            Error::UnknownTracks(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "fields": self.fields }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

impl AppState {
    /// Loads a run whose analysis reached the export stage.
    pub fn open(run_dir: &Path) -> bruvs_core::Result<Self> {
        let run = RunDir::open(run_dir)?;
        if !run.manifest().all_done(Stage::Exported) {
            return Err(Error::Run(format!("{} has not finished analysis", run_dir.display())));
        }
        let mut videos = BTreeMap::new();
        for v in run.manifest().videos.keys() {
            let summaries = run.kept_summaries(v)?.into_iter().map(|s| (s.track_id, s)).collect();
            videos.insert(v.clone(), VideoTracks { summaries });
        }
        let store = Mutex::new(AnnotationStore::open(run_dir)?);
        Ok(AppState { run, videos, store })
    }

    fn latest(&self) -> BTreeMap<(String, TrackId), Verdict> {
        self.store.lock().expect("store lock").latest()
    }

    fn video(&self, video_id: &str) -> ApiResult<&VideoTracks> {
        self.videos
            .get(video_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown video {video_id:?}")))
    }

    fn summary(&self, video_id: &str, track_id: TrackId) -> ApiResult<&TrackSummary> {
        self.video(video_id)?
            .summaries
            .get(&track_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown track {video_id}/{track_id}")))
    }

    /// Verdicts as currently shown: the API's latest, else the file's.
    fn shown_verdicts(&self) -> ApiResult<BTreeMap<(String, TrackId), Verdict>> {
        let mut shown: BTreeMap<(String, TrackId), Verdict> = self
            .run
            .filesystem_annotations()?
            .annotations
            .into_iter()
            .map(|a| ((a.video_id, a.track_id), a.verdict))
            .collect();
        shown.extend(self.latest());
        Ok(shown)
    }
}

#[derive(Debug, Serialize)]
struct TrackView<'a> {
    video_id: &'a str,
    #[serde(flatten)]
    summary: &'a TrackSummary,
    image_url: Option<String>,
    verdict: Option<&'a Verdict>,
}

fn track_view<'a>(state: &'a AppState, video_id: &'a str, s: &'a TrackSummary, verdict: Option<&'a Verdict>) -> TrackView<'a> {
    let image_url = state
        .run
        .image_path(video_id, s.track_id)
        .map(|_| format!("/api/tracks/{video_id}/{}/image", s.track_id));
    TrackView {
        video_id,
        summary: s,
        image_url,
        verdict,
    }
}

async fn list_videos(State(state): State<Shared>) -> ApiResult<Json<Value>> {
    let verdicts = state.shown_verdicts()?;
    let out: Vec<Value> = state
        .videos
        .iter()
        .map(|(v, tracks)| {
            let mine: Vec<&Verdict> = tracks
                .summaries
                .keys()
                .filter_map(|id| verdicts.get(&(v.clone(), *id)))
                .collect();
            let labeled = mine.iter().filter(|x| matches!(x, Verdict::Labeled(_))).count();
            let images = state.run.manifest().videos[v].images.len();
            json!({
                "video_id": v,
                "tracks": tracks.summaries.len(),
                "reviewed": mine.len(),
                "labeled": labeled,
                "rejected": mine.len() - labeled,
                "images": images,
            })
        })
        .collect();
    Ok(Json(Value::Array(out)))
}

async fn list_tracks(State(state): State<Shared>, UrlPath(video_id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let tracks = state.video(&video_id)?;
    let verdicts = state.shown_verdicts()?;
    let views: Vec<TrackView> = tracks
        .summaries
        .values()
        .map(|s| track_view(&state, &video_id, s, verdicts.get(&(video_id.clone(), s.track_id))))
        .collect();
    Ok(Json(serde_json::to_value(views).expect("serializable")))
}

async fn get_track(
    State(state): State<Shared>,
    UrlPath((video_id, track_id)): UrlPath<(String, TrackId)>,
) -> ApiResult<Json<Value>> {
    let s = state.summary(&video_id, track_id)?;
    let verdicts = state.shown_verdicts()?;
    let view = track_view(&state, &video_id, s, verdicts.get(&(video_id.clone(), track_id)));
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

async fn get_image(
    State(state): State<Shared>,
    UrlPath((video_id, track_id)): UrlPath<(String, TrackId)>,
) -> ApiResult<Response> {
    state.summary(&video_id, track_id)?;
    let path = state
        .run
        .image_path(&video_id, track_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no image for track {video_id}/{track_id}")))?;
    let bytes = std::fs::read(&path)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response())
}

/// Parses an annotation body, separating malformed input (400) from a
/// species that breaks the label grammar (422).
fn parse_verdict(body: &[u8]) -> ApiResult<Verdict> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "body is not valid JSON").field("body", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "body must be a JSON object"))?;
    let bad = |field: &str, problem: &str| ApiError::new(StatusCode::BAD_REQUEST, "invalid annotation").field(field, problem);
    if let Some(k) = obj.keys().find(|k| *k != "verdict" && *k != "species") {
        return Err(bad(k, "unknown field"));
    }
    let verdict = match obj.get("verdict") {
        None => return Err(bad("verdict", "required")),
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(bad("verdict", "must be a string")),
    };
    match (verdict, obj.get("species")) {
        ("rejected", None | Some(Value::Null)) => Ok(Verdict::Rejected),
        ("rejected", Some(_)) => Err(bad("species", "not allowed with verdict rejected")),
        ("labeled", Some(Value::String(s))) => SpeciesLabel::new(s.as_str()).map(Verdict::Labeled).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid species").field("species", e.to_string())
        }),
        ("labeled", None | Some(Value::Null)) => Err(bad("species", "required with verdict labeled")),
        ("labeled", Some(_)) => Err(bad("species", "must be a string")),
        _ => Err(bad("verdict", "must be \"labeled\" or \"rejected\"")),
    }
}

async fn put_annotation(
    State(state): State<Shared>,
    UrlPath((video_id, track_id)): UrlPath<(String, TrackId)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    state.summary(&video_id, track_id)?;
    let verdict = parse_verdict(&body)?;
    let state2 = state.clone();
    let annotation = Annotation {
        video_id,
        track_id,
        verdict,
    };
    // The append syncs to disk, so keep it off the async workers.
    let record = tokio::task::spawn_blocking(move || state2.store.lock().expect("store lock").append(annotation))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(serde_json::to_value(record).expect("serializable")))
}

#[derive(Debug, Deserialize)]
struct MaxNQuery {
    format: Option<String>,
}

async fn get_maxn(
    State(state): State<Shared>,
    UrlPath(video_id): UrlPath<String>,
    Query(q): Query<MaxNQuery>,
) -> ApiResult<Response> {
    state.video(&video_id)?;
    let report = state.run.current_maxn(&state.latest())?;
    let rows: Vec<MaxNRow> = report.rows.into_iter().filter(|r| r.video_id == video_id).collect();
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(json!({ "rows": rows })).into_response()),
        Some("csv") => {
            let csv = bruvs_core::analysis::MaxNReport::new(rows).to_csv_string();
            Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
        }
        Some(other) => Err(ApiError::new(StatusCode::BAD_REQUEST, "unsupported format").field("format", other.to_string())),
    }
}

async fn list_species(State(state): State<Shared>) -> Json<Value> {
    let path = state.run.root().join("species.txt");
    let species: Vec<String> = std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(str::trim)
        .filter(|l| SpeciesLabel::new(*l).is_ok())
        .map(String::from)
        .collect();
    Json(json!(species))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{v}/tracks", get(list_tracks))
        .route("/api/videos/{v}/maxn", get(get_maxn))
        .route("/api/tracks/{v}/{id}", get(get_track))
        .route("/api/tracks/{v}/{id}/image", get(get_image))
        .route("/api/tracks/{v}/{id}/annotation", put(put_annotation))
        .route("/api/species", get(list_species))
        .with_state(Arc::new(state))
}

/// Serves the API on `addr` until the future is dropped or ctrl-c.
pub async fn serve(run_dir: &Path, addr: SocketAddr) -> bruvs_core::Result<()> {
    let app = router(AppState::open(run_dir)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Run(format!("bind {addr}: {e}")))?;
    log::info!("serving {} on http://{}", run_dir.display(), listener.local_addr().map_err(|e| Error::Run(e.to_string()))?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Run(e.to_string()))
}
