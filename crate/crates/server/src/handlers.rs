use axum::body::Bytes;
use axum::http::header::{HeaderMap, HeaderName, HeaderValue, CONTENT_TYPE};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use segcrowd_core::export::{export_dataset, Selector};
use segcrowd_core::mask::{serialize_mask, ImageRecord, ImageStatus};
use segcrowd_core::select::{next_batch_scored, score_entropy, score_margin, StrategyName, StrategySpec};
use segcrowd_core::store::{Verdict, VersionEntry};
use segcrowd_core::vision::{decode_png, encode_png, enhance_contrast_rgb, QualityReport};
use segcrowd_core::workflow::{Annotator, Role, Task, TaskState};

use crate::error::ApiError;
use crate::extract::{Actor, Body, Path, Query};
use crate::{AppState, DEFAULT_PAGE_LIMIT, MAX_PAGE_LIMIT};

const LSEG_TYPE: &str = "application/octet-stream";
const PNG_TYPE: &str = "image/png";

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn require(actor: &Annotator, role: Role) -> Result<(), ApiError> {
    if actor.role >= role {
        Ok(())
    } else {
        Err(ApiError::forbidden(format!(
            "requires the {role:?} role, {} is {:?}",
            actor.annotator_id, actor.role
        )))
    }
}

/// Parses a JSON body. Called after authorization so that forbidden callers
/// see 403 whatever they send.
fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(format!("invalid JSON body: {e}")))
}

fn bytes_response(content_type: &'static str, extra: &[(&'static str, String)], body: Vec<u8>) -> Response {
    let mut headers = HeaderMap::new();
    headers.insert(CONTENT_TYPE, HeaderValue::from_static(content_type));
    for (k, v) in extra {
        if let Ok(v) = HeaderValue::from_str(v) {
            headers.insert(HeaderName::from_static(k), v);
        }
    }
    (headers, body).into_response()
}

#[derive(Deserialize)]
pub(crate) struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

impl Page {
    fn apply<T>(&self, items: Vec<T>) -> Vec<T> {
        let limit = self.limit.unwrap_or(DEFAULT_PAGE_LIMIT).min(MAX_PAGE_LIMIT);
        items.into_iter().skip(self.offset.unwrap_or(0)).take(limit).collect()
    }
}

pub(crate) async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

pub(crate) async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub(crate) async fn enroll(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    headers: HeaderMap,
    Body(body): Body,
) -> Result<Response, ApiError> {
    require(&actor, Role::Researcher)?;
    let source = headers
        .get("x-source-name")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_owned();
    let (record, created) = blocking(move || Ok(state.store.enroll(&actor, &body, &source)?)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let dup = HeaderValue::from_static(if created { "false" } else { "true" });
    Ok((status, [(HeaderName::from_static("x-duplicate"), dup)], Json(record)).into_response())
}

pub(crate) async fn list_images(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Query(page): Query<Page>,
) -> Result<Json<Vec<ImageRecord>>, ApiError> {
    require(&actor, Role::Senior)?;
    Ok(Json(page.apply(state.store.images())))
}

pub(crate) async fn image(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let bytes = blocking(move || Ok(state.store.image_bytes(&id)?)).await?;
    Ok(bytes_response(PNG_TYPE, &[], bytes))
}

pub(crate) async fn enhanced(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let bytes = blocking(move || {
        let png = state.store.image_bytes(&id)?;
        state.cache.get_or_put("clahe", &id, "enhanced.png", || {
            let decoded = decode_png(&png)?;
            let samples = enhance_contrast_rgb(&decoded);
            Ok(encode_png(decoded.width, decoded.height, decoded.channels, &samples)?)
        })
    })
    .await?;
    Ok(bytes_response(PNG_TYPE, &[], bytes))
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct Scores {
    entropy: f64,
    margin: f64,
}

/// Pre-segmentation bytes and uncertainty scores, computed once per image
/// and provider.
fn presegment_cached(state: &AppState, id: &str) -> Result<(Vec<u8>, Scores), ApiError> {
    let provider = state.preseg.name().to_owned();
    if let (Some(lseg), Some(scores)) = (
        state.cache.get(&provider, id, "lseg"),
        state.cache.get(&provider, id, "scores.json"),
    ) {
        if let Ok(scores) = serde_json::from_slice(&scores) {
            return Ok((lseg, scores));
        }
    }
    let png = state.store.image_bytes(id)?;
    let out = state.preseg.presegment(&png, &state.classes)?;
    let lseg = serialize_mask(&out.mask);
    let scores = Scores {
        entropy: score_entropy(&out.probability),
        margin: score_margin(&out.probability),
    };
    let json = serde_json::to_vec(&scores).map_err(|e| ApiError::internal(e.to_string()))?;
    state.cache.put(&provider, id, "lseg", &lseg)?;
    state.cache.put(&provider, id, "scores.json", &json)?;
    Ok((lseg, scores))
}

pub(crate) async fn presegmentation(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let provider = state.preseg.name().to_owned();
    let (lseg, _) = blocking(move || {
        state.store.image(&id)?;
        presegment_cached(&state, &id)
    })
    .await?;
    Ok(bytes_response(LSEG_TYPE, &[("x-provider", provider)], lseg))
}

pub(crate) async fn quality(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let provider = state.quality.name().to_owned();
    let report = blocking(move || {
        let png = state.store.image_bytes(&id)?;
        let name = state.quality.name().to_owned();
        let bytes = state.cache.get_or_put(&name, &id, "quality.json", || {
            let report = state.quality.grade(&png)?;
            serde_json::to_vec(&report).map_err(|e| ApiError::internal(e.to_string()))
        })?;
        serde_json::from_slice::<QualityReport>(&bytes).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    let mut response = Json(report).into_response();
    if let Ok(v) = HeaderValue::from_str(&provider) {
        response.headers_mut().insert(HeaderName::from_static("x-provider"), v);
    }
    Ok(response)
}

pub(crate) async fn history(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path(id): Path<String>,
    Query(page): Query<Page>,
) -> Result<Response, ApiError> {
    let all = state.store.history(&id)?;
    let total = all.len().to_string();
    let mut response = Json(page.apply(all)).into_response();
    response
        .headers_mut()
        .insert(HeaderName::from_static("x-total-count"), HeaderValue::from_str(&total).expect("digits"));
    Ok(response)
}

pub(crate) async fn segmentation(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(_): Actor,
    Path((image_id, version_no)): Path<(String, u32)>,
) -> Result<Response, ApiError> {
    let (entry, bytes) = blocking(move || {
        let entry = state.store.version(&image_id, version_no)?;
        let bytes = state.store.get_blob(&entry.blob)?;
        Ok((entry, bytes))
    })
    .await?;
    let kind = serde_json::to_value(entry.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    Ok(bytes_response(
        LSEG_TYPE,
        &[("x-annotator-id", entry.annotator_id), ("x-version-kind", kind)],
        bytes,
    ))
}

pub(crate) async fn submit(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    Body(body): Body,
) -> Result<Json<VersionEntry>, ApiError> {
    let entry = blocking(move || {
        state.store.image(&id)?;
        // the caller's open task on this image, else their latest one so the
        // store reports the illegal transition
        let task = state.store.read(|s| {
            s.tasks
                .values()
                .filter(|t| t.image_id == id && t.annotator_id == actor.annotator_id)
                .max_by_key(|t| (t.state.is_open(), t.updated_at, t.task_id.clone()))
                .cloned()
        });
        let task = task.ok_or_else(|| ApiError::forbidden(format!("{} has no task on image {id}", actor.annotator_id)))?;
        Ok(state.store.submit(&actor, &task.task_id, &body)?)
    })
    .await?;
    Ok(Json(entry))
}

pub(crate) async fn restore(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path((id, version_no)): Path<(String, u32)>,
) -> Result<Json<VersionEntry>, ApiError> {
    require(&actor, Role::Senior)?;
    let entry = blocking(move || Ok(state.store.restore_as(&actor, &id, version_no)?)).await?;
    Ok(Json(entry))
}

#[derive(Deserialize)]
pub(crate) struct TaskQuery {
    mine: Option<bool>,
    state: Option<TaskState>,
    #[serde(flatten)]
    page: Page,
}

pub(crate) async fn tasks(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Query(q): Query<TaskQuery>,
) -> Result<Json<Vec<Task>>, ApiError> {
    let mine = q.mine.unwrap_or(false);
    if !mine {
        require(&actor, Role::Senior)?;
    }
    let mut list: Vec<Task> = match (mine, q.state) {
        (true, None) => state.store.next_tasks(&actor.annotator_id)?,
        _ => state
            .store
            .tasks()
            .into_iter()
            .filter(|t| !mine || t.annotator_id == actor.annotator_id)
            .filter(|t| q.state.is_none_or(|s| t.state == s))
            .collect(),
    };
    list.sort_by(|a, b| (a.updated_at, &a.task_id).cmp(&(b.updated_at, &b.task_id)));
    Ok(Json(q.page.apply(list)))
}

pub(crate) async fn task(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(task_id): Path<String>,
) -> Result<Json<Task>, ApiError> {
    let task = state.store.task(&task_id)?;
    if task.annotator_id != actor.annotator_id {
        require(&actor, Role::Senior)?;
    }
    Ok(Json(task))
}

pub(crate) async fn start(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(task_id): Path<String>,
) -> Result<Json<Task>, ApiError> {
    let task = blocking(move || Ok(state.store.start(&actor, &task_id)?)).await?;
    Ok(Json(task))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkipRequest {
    pub reason: String,
    #[serde(default)]
    pub quality_grade: Option<f64>,
}

pub(crate) async fn skip(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(task_id): Path<String>,
    Body(body): Body,
) -> Result<Json<Task>, ApiError> {
    let task = state.store.task(&task_id)?;
    if task.annotator_id != actor.annotator_id {
        return Err(ApiError::forbidden(format!("task {task_id} belongs to {}", task.annotator_id)));
    }
    let req: SkipRequest = parse_json(&body)?;
    let task = blocking(move || Ok(state.store.skip(&actor, &task_id, &req.reason, req.quality_grade)?)).await?;
    Ok(Json(task))
}

/// Review verdict. Sent as a JSON body, or as `?verdict=` next to an
/// `.lseg` body carrying the correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub verdict: Verdict,
}

#[derive(Deserialize)]
pub(crate) struct ReviewQuery {
    verdict: Option<Verdict>,
}

pub(crate) async fn review(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(task_id): Path<String>,
    Query(q): Query<ReviewQuery>,
    headers: HeaderMap,
    Body(body): Body,
) -> Result<Json<VersionEntry>, ApiError> {
    require(&actor, Role::Senior)?;
    let is_json = headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (verdict, mask): (Verdict, Option<Bytes>) = if is_json {
        let r: ReviewRequest = parse_json(&body)?;
        (r.verdict, None)
    } else if body.is_empty() {
        (q.verdict.ok_or_else(|| ApiError::malformed("missing verdict"))?, None)
    } else {
        (q.verdict.unwrap_or(Verdict::Corrected), Some(body))
    };
    if verdict == Verdict::Approved && mask.is_some() {
        return Err(ApiError::malformed("an approval carries no mask"));
    }
    let entry = blocking(move || Ok(state.store.review(&actor, &task_id, verdict, mask.as_deref())?)).await?;
    Ok(Json(entry))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssignRequest {
    pub image_id: String,
    pub annotator_id: String,
}

pub(crate) async fn assign(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Body(body): Body,
) -> Result<Json<Task>, ApiError> {
    require(&actor, Role::Researcher)?;
    let req: AssignRequest = parse_json(&body)?;
    let task = blocking(move || Ok(state.store.assign(&actor, &req.image_id, &req.annotator_id)?)).await?;
    Ok(Json(task))
}

/// An annotator as shown to clients; the token digest stays on the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorView {
    pub annotator_id: String,
    pub display_name: String,
    pub role: Role,
    pub active: bool,
    pub registered_at: DateTime<Utc>,
}

impl From<Annotator> for AnnotatorView {
    fn from(a: Annotator) -> Self {
        Self {
            annotator_id: a.annotator_id,
            display_name: a.display_name,
            role: a.role,
            active: a.active,
            registered_at: a.registered_at,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub display_name: String,
    pub role: Role,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub annotator: AnnotatorView,
    /// Shown exactly once.
    pub token: String,
    pub duplicate_display_name: bool,
}

pub(crate) async fn register(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Body(body): Body,
) -> Result<Json<RegisterResponse>, ApiError> {
    require(&actor, Role::Researcher)?;
    let req: RegisterRequest = parse_json(&body)?;
    let reg = blocking(move || Ok(state.store.register_annotator(&actor, &req.display_name, req.role)?)).await?;
    Ok(Json(RegisterResponse {
        annotator: reg.annotator.into(),
        token: reg.token,
        duplicate_display_name: reg.duplicate_display_name,
    }))
}

pub(crate) async fn annotators(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Query(page): Query<Page>,
) -> Result<Json<Vec<AnnotatorView>>, ApiError> {
    require(&actor, Role::Researcher)?;
    let all = state.store.annotators().into_iter().map(AnnotatorView::from).collect();
    Ok(Json(page.apply(all)))
}

pub(crate) async fn deactivate(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Path(id): Path<String>,
) -> Result<Json<AnnotatorView>, ApiError> {
    require(&actor, Role::Researcher)?;
    let a = blocking(move || Ok(state.store.deactivate_annotator(&actor, &id)?)).await?;
    Ok(Json(a.into()))
}

#[derive(Deserialize)]
pub(crate) struct BatchQuery {
    strategy: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
}

pub(crate) async fn next_batch(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Query(q): Query<BatchQuery>,
) -> Result<Json<Vec<String>>, ApiError> {
    require(&actor, Role::Researcher)?;
    let spec = StrategySpec::parse(
        q.strategy.as_deref().unwrap_or("entropy"),
        q.k.unwrap_or(DEFAULT_PAGE_LIMIT),
        q.seed,
    )?;
    let batch = blocking(move || {
        let pool: Vec<String> = state.store.read(|s| {
            s.images
                .values()
                .filter(|i| i.status == ImageStatus::Pending)
                .map(|i| i.image_id.clone())
                .collect()
        });
        let scored: Vec<(&str, Option<f64>)> = pool
            .iter()
            .map(|id| {
                let score = match spec.name {
                    StrategyName::Random => None,
                    // a failed provider only demotes the image
                    _ => presegment_cached(&state, id).ok().map(|(_, s)| match spec.name {
                        StrategyName::Entropy => s.entropy,
                        _ => s.margin,
                    }),
                };
                (id.as_str(), score)
            })
            .collect();
        Ok(next_batch_scored(&scored, &spec))
    })
    .await?;
    Ok(Json(batch))
}

#[derive(Deserialize)]
pub(crate) struct ExportQuery {
    selector: Option<String>,
}

pub(crate) async fn export(
    axum::extract::State(state): axum::extract::State<AppState>,
    Actor(actor): Actor,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    require(&actor, Role::Researcher)?;
    let selector: Selector = q.selector.as_deref().unwrap_or("all").parse().map_err(ApiError::malformed)?;
    let (archive, seq) = blocking(move || {
        let mut out = Vec::new();
        let manifest = export_dataset(&state.store, &actor, selector, &mut out)?;
        Ok((out, manifest.journal_seq))
    })
    .await?;
    Ok(bytes_response("application/x-tar", &[("x-journal-seq", seq.to_string())], archive))
}
