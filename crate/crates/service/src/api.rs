use std::collections::BTreeSet;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rallyvis::analysis::Target;
use rallyvis::design_space::{NarrativeOrder, NarrativePurpose, Visual};
use rallyvis::events::{EventKind, EventSubject};
use rallyvis::hash::sha256_hex;
use rallyvis::recommender::{recommend, Recommendation};
use rallyvis::render::{export, preview_svg};
use rallyvis::script::{AugmentationScript, DataSelection, ScriptMapping, Style, TimeForkSpec, ZigZagSpec};
use rallyvis::{Error, ErrorKind};

use crate::project::{Diagnostic, Project, Upload, EXPORTS};
use crate::{AppState, ProjectHandle};

type AppResult<T> = Result<T, ApiError>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), diagnostics: Vec::new() }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, what)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.diagnostics.is_empty() {
            body["diagnostics"] = json!(self.diagnostics);
        }
        (self.status, Json(body)).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed request: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/timeline", get(timeline))
        .route("/projects/{id}/pyramid", get(pyramid))
        .route("/projects/{id}/attributes", get(attributes))
        .route("/projects/{id}/selections", post(select))
        .route("/projects/{id}/scripts", get(list_scripts))
        .route("/projects/{id}/scripts/{script_id}", get(get_script).put(put_script).patch(patch_script))
        .route("/projects/{id}/scripts/{script_id}/schedule", get(schedule))
        .route("/projects/{id}/preview/{script_id}/{index}", get(preview))
        .route("/projects/{id}/export/{script_id}", post(export_script))
        .with_state(state)
}

fn handle(state: &AppState, id: &str) -> AppResult<ProjectHandle> {
    state.project(id).ok_or_else(|| ApiError::not_found(format!("unknown project {id:?}")))
}

fn script_of<'a>(p: &'a Project, script_id: &str) -> AppResult<&'a AugmentationScript> {
    p.script(script_id).ok_or_else(|| ApiError::not_found(format!("unknown script {script_id:?}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewProject {
    tracking: Value,
    #[serde(default)]
    tactics: Option<Value>,
    #[serde(default)]
    corpus: Option<Value>,
}

fn project_summary(p: &Project) -> Value {
    json!({
        "project_id": p.id,
        "frame_count": p.analysis.frame_count(),
        "turn_count": p.analysis.pyramid.turns().len(),
        "pyramid": p.analysis.pyramid.summary(),
        "scripts": p.scripts.keys().collect::<Vec<_>>(),
    })
}

async fn create_project(State(state): State<Arc<AppState>>, body: Bytes) -> AppResult<Response> {
    let req: NewProject = parse_body(&body)?;
    let bytes = |v: &Value| serde_json::to_vec(v).expect("json value");
    let tracking = bytes(&req.tracking);
    let tactics = req.tactics.as_ref().map(bytes);
    let corpus = req.corpus.as_ref().map(bytes);
    let upload = Upload::parse(&tracking, tactics.as_deref(), corpus.as_deref()).map_err(|diagnostics| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        message: "invalid upload".into(),
        diagnostics,
    })?;
    let (id, dir) = state.allocate();
    let config = state.config.clone();
    let project = tokio::task::spawn_blocking(move || Project::create(id, dir, upload, &config))
        .await
        .map_err(internal)?
        .map_err(|e| {
            let mut err = ApiError::from(e);
            err.diagnostics.push(Diagnostic { file: "tracking".into(), message: err.message.clone() });
            err
        })?;
    let summary = project_summary(&project);
    state.insert(project);
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_project(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    Ok(Json(project_summary(&p)))
}

#[derive(Serialize)]
struct Glyph {
    event_id: String,
    kind: EventKind,
    start: usize,
    end: usize,
    color_class: &'static str,
}

async fn timeline(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    let events = &p.analysis.events;
    let turns: Vec<Value> = events
        .of_kind(EventKind::Turn)
        .map(|t| {
            json!({
                "event_id": t.event_id,
                "subject": t.subject,
                "start": t.start,
                "end": t.end,
                "stroke": t.attributes.get("stroke"),
            })
        })
        .collect();
    let mut glyphs: Vec<Glyph> = events
        .events
        .iter()
        .filter(|e| e.kind != EventKind::Turn)
        .map(|e| Glyph {
            event_id: e.event_id.clone(),
            kind: e.kind,
            start: e.start,
            end: e.end,
            color_class: if e.subject == EventSubject::Ball { "ball" } else { "player" },
        })
        .collect();
    glyphs.sort_by(|a, b| (a.start, a.end, &a.event_id).cmp(&(b.start, b.end, &b.event_id)));
    Ok(Json(json!({ "frame_count": p.analysis.frame_count(), "turns": turns, "glyphs": glyphs })))
}

#[derive(Deserialize)]
struct PyramidQuery {
    brush: Option<String>,
}

async fn pyramid(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PyramidQuery>,
) -> AppResult<Response> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    let pyramid = match q.brush {
        Some(b) => {
            let (a, z) = b
                .split_once(',')
                .and_then(|(a, z)| Some((a.trim().parse::<usize>().ok()?, z.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("brush {b:?} is not \"start,end\"")))?;
            p.analysis.pyramid.brush(a, z)?
        }
        None => p.analysis.pyramid.clone(),
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], pyramid.to_json()).into_response())
}

fn purpose_filter(purpose: Option<NarrativePurpose>) -> rallyvis::design_space::DataLevel {
    purpose.unwrap_or(NarrativePurpose::Education).level_filter()
}

#[derive(Deserialize)]
struct AttributeQuery {
    subject: Target,
    frame: usize,
    #[serde(default)]
    purpose: Option<NarrativePurpose>,
}

async fn attributes(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AttributeQuery>,
) -> AppResult<Json<Value>> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    if q.frame >= p.analysis.frame_count() {
        return Err(ApiError::not_found(format!("frame {} is beyond the rally", q.frame)));
    }
    let list = p.analysis.attributes_at(q.subject, q.frame, purpose_filter(q.purpose));
    Ok(Json(json!({ "subject": q.subject, "frame": q.frame, "attributes": list })))
}

fn default_script_id() -> String {
    "main".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionRequest {
    #[serde(default = "default_script_id")]
    script_id: String,
    subject: Target,
    frame: usize,
    attributes: Vec<String>,
    #[serde(default)]
    purpose: Option<NarrativePurpose>,
    #[serde(default)]
    order: Option<NarrativeOrder>,
}

#[derive(Serialize)]
struct MappingRow<'a> {
    mapping_id: &'a str,
    attribute: &'a str,
    subject: Target,
    anchor_frame: usize,
    visual: Visual,
}

fn mapping_rows(script: &AugmentationScript) -> Vec<MappingRow<'_>> {
    script
        .mappings
        .iter()
        .map(|m| MappingRow {
            mapping_id: &m.mapping_id,
            attribute: &m.selection.attribute,
            subject: m.selection.subject,
            anchor_frame: m.selection.anchor_frame,
            visual: m.visual,
        })
        .collect()
}

async fn select(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> AppResult<Json<Value>> {
    let req: SelectionRequest = parse_body(&body)?;
    let h = handle(&state, &id)?;
    let mut p = h.write().await;
    let a = &p.analysis;
    if req.frame >= a.frame_count() {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("frame {} is beyond the rally", req.frame)));
    }
    let available: BTreeSet<&str> =
        a.attributes_at(req.subject, req.frame, purpose_filter(req.purpose)).into_iter().map(|k| k.name.as_str()).collect();
    if let Some(missing) = req.attributes.iter().find(|n| !available.contains(n.as_str())) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("attribute {missing} unavailable for {} at frame {}", req.subject, req.frame),
        ));
    }
    let mut script = match p.script(&req.script_id) {
        Some(s) => s.clone(),
        None => AugmentationScript::new(
            req.script_id.clone(),
            (0, a.dataset.last_frame()),
            req.order.unwrap_or(NarrativeOrder::Linear),
        ),
    };
    if let Some(order) = req.order {
        retarget(&mut script, order);
    }
    let mut recommendations: Vec<Recommendation> = Vec::new();
    for name in &req.attributes {
        let rec = recommend(&p.stats, name, script.order, &p.fallback)?;
        let visual: Visual = rec.visual.parse()?;
        let mapping_id = script.next_mapping_id();
        script.mappings.push(ScriptMapping {
            selection: DataSelection {
                selection_id: format!("s-{mapping_id}"),
                attribute: name.clone(),
                subject: req.subject,
                anchor_frame: req.frame,
                source_span: a.default_span(req.frame),
            },
            mapping_id,
            visual,
            style: Style::default(),
            hold_frames: None,
            pass: 1,
        });
        recommendations.push(rec);
    }
    script.validate_with(a)?;
    p.put_script(script.clone())?;
    Ok(Json(json!({
        "script": script,
        "recommendations": recommendations,
        "visual_mappings": mapping_rows(&script),
    })))
}

/// Scripts are stored even when their order cannot be scheduled; that error
/// surfaces when they are compiled.
fn check_stored(script: &AugmentationScript, p: &Project) -> AppResult<()> {
    match script.validate_with(&p.analysis) {
        Ok(()) | Err(Error::UnsupportedOrder(_)) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Switches the order, dropping sections that belong to the old one.
fn retarget(script: &mut AugmentationScript, order: NarrativeOrder) {
    script.order = order;
    if order != NarrativeOrder::ZigZag {
        script.zigzag = None;
        for m in &mut script.mappings {
            m.pass = 1;
        }
    }
    if order != NarrativeOrder::TimeFork {
        script.timefork = None;
    }
}

async fn list_scripts(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    let rows: Vec<Value> = p
        .scripts
        .values()
        .map(|s| json!({ "script_id": s.script_id, "order": s.order, "mappings": s.mappings.len(), "digest": s.digest() }))
        .collect();
    Ok(Json(json!({ "scripts": rows })))
}

async fn get_script(
    State(state): State<Arc<AppState>>,
    Path((id, script_id)): Path<(String, String)>,
) -> AppResult<Json<AugmentationScript>> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    Ok(Json(script_of(&p, &script_id)?.clone()))
}

async fn put_script(
    State(state): State<Arc<AppState>>,
    Path((id, script_id)): Path<(String, String)>,
    body: Bytes,
) -> AppResult<Json<AugmentationScript>> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let script = AugmentationScript::from_json(text)?;
    if script.script_id != script_id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("script_id {:?} does not match the path", script.script_id),
        ));
    }
    let h = handle(&state, &id)?;
    let mut p = h.write().await;
    check_stored(&script, &p)?;
    p.put_script(script.clone())?;
    Ok(Json(script))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingPatch {
    mapping_id: String,
    #[serde(default)]
    visual: Option<Visual>,
    #[serde(default)]
    style: Option<Style>,
    #[serde(default)]
    hold_frames: Option<usize>,
    #[serde(default)]
    pass: Option<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptPatch {
    #[serde(default)]
    order: Option<NarrativeOrder>,
    #[serde(default)]
    clip: Option<(usize, usize)>,
    #[serde(default)]
    zigzag: Option<ZigZagSpec>,
    #[serde(default)]
    timefork: Option<TimeForkSpec>,
    #[serde(default)]
    mappings: Vec<MappingPatch>,
    /// Mapping ids to delete.
    #[serde(default)]
    remove: Vec<String>,
}

async fn patch_script(
    State(state): State<Arc<AppState>>,
    Path((id, script_id)): Path<(String, String)>,
    body: Bytes,
) -> AppResult<Json<AugmentationScript>> {
    let patch: ScriptPatch = parse_body(&body)?;
    let h = handle(&state, &id)?;
    let mut p = h.write().await;
    let mut script = script_of(&p, &script_id)?.clone();
    if let Some(order) = patch.order {
        retarget(&mut script, order);
    }
    if let Some(clip) = patch.clip {
        script.clip = clip;
    }
    if patch.zigzag.is_some() {
        script.zigzag = patch.zigzag;
    }
    if patch.timefork.is_some() {
        script.timefork = patch.timefork;
    }
    for mp in patch.mappings {
        let m = script
            .mappings
            .iter_mut()
            .find(|m| m.mapping_id == mp.mapping_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown mapping {:?}", mp.mapping_id)))?;
        if let Some(v) = mp.visual {
            m.visual = v;
        }
        if let Some(s) = mp.style {
            m.style = m.style.merged(&s);
        }
        if let Some(hold) = mp.hold_frames {
            m.hold_frames = Some(hold);
        }
        if let Some(pass) = mp.pass {
            m.pass = pass;
        }
    }
    for r in &patch.remove {
        let before = script.mappings.len();
        script.mappings.retain(|m| &m.mapping_id != r);
        if script.mappings.len() == before {
            return Err(ApiError::not_found(format!("unknown mapping {r:?}")));
        }
    }
    check_stored(&script, &p)?;
    p.put_script(script.clone())?;
    Ok(Json(script))
}

async fn schedule(
    State(state): State<Arc<AppState>>,
    Path((id, script_id)): Path<(String, String)>,
) -> AppResult<Response> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    let script = script_of(&p, &script_id)?;
    let schedule = p.schedule(script, &state.config)?;
    let body = json!({
        "script_digest": p.compiled_digest(&script_id),
        "schedule_digest": schedule.digest(),
        "schedule": &*schedule,
    });
    Ok(Json(body).into_response())
}

async fn preview(
    State(state): State<Arc<AppState>>,
    Path((id, script_id, index)): Path<(String, String, usize)>,
    headers: HeaderMap,
) -> AppResult<Response> {
    let h = handle(&state, &id)?;
    let p = h.read().await;
    let script = script_of(&p, &script_id)?;
    let schedule = p.schedule(script, &state.config)?;
    let svg = preview_svg(&schedule, script, &p.analysis, &state.config.render, index)?.ok_or_else(|| {
        ApiError::not_found(format!("output index {index} out of range (total {})", schedule.total_frames))
    })?;
    let frame = &schedule.output_frames[index];
    let etag = format!("\"{}\"", sha256_hex(svg.as_bytes()));
    let kind = serde_json::to_value(frame.kind).map_err(internal)?;
    let mut out = HeaderMap::new();
    out.insert(header::ETAG, HeaderValue::from_str(&etag).map_err(internal)?);
    out.insert("x-source-frame", HeaderValue::from(frame.source_frame));
    out.insert("x-frame-kind", HeaderValue::from_str(kind.as_str().unwrap_or_default()).map_err(internal)?);
    out.insert("x-total-frames", HeaderValue::from(schedule.total_frames));
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, out).into_response());
    }
    out.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/svg+xml"));
    Ok((StatusCode::OK, out, svg).into_response())
}

async fn export_script(
    State(state): State<Arc<AppState>>,
    Path((id, script_id)): Path<(String, String)>,
) -> AppResult<Response> {
    let h = handle(&state, &id)?;
    let p = h.clone().read_owned().await;
    let script = script_of(&p, &script_id)?.clone();
    let schedule = p.schedule(&script, &state.config)?;
    let exports = p.dir.join(EXPORTS);
    let target = exports.join(&script_id);
    let staging = exports.join(format!(".{script_id}.{}", state.export_seq.fetch_add(1, Ordering::Relaxed)));
    let defaults = state.config.render.clone();
    let shared = state.clone();
    let (manifest, location) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let manifest = export(&schedule, &script, &p.analysis, &defaults, &staging, None)?;
        let _swap = shared.export_swap.lock().map_err(internal)?;
        if target.exists() {
            std::fs::remove_dir_all(&target).map_err(internal)?;
        }
        std::fs::rename(&staging, &target).map_err(internal)?;
        Ok((manifest, target))
    })
    .await
    .map_err(internal)??;
    let body = json!({
        "script_id": script_id,
        "location": location.display().to_string(),
        "manifest": "manifest.json",
        "total_frames": manifest.total_frames,
        "manifest_sha256": sha256_hex(manifest.to_json().as_bytes()),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}
