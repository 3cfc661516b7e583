//! HTTP authoring API. Bodies are JSON; edits that carry a `revision`
//! are refused with 409 when it is not the stored revision.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State, WebSocketUpgrade};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepwise_core::association::{extract_associations, AssociationConfig};
use stepwise_core::frames::{FrameDir, FrameSource};
use stepwise_core::fsm::{compile, has_errors, scaffold_from_workflow, simulate, validate, Diagnostic, FsmError, TaskFsm, TaskPackage};
use stepwise_core::labeling::{dedupe_frames, export_dataset, propagate_labels, ExportOptions, LabelProject, PropagationParams};
use stepwise_core::segmentation::segment_trace;
use stepwise_core::trace::check_contiguous;
use stepwise_core::{BoundingBox, DetectionFrame, SegmentationConfig, Workflow};

use crate::protocol::PROTOCOL_VERSION;
use crate::session::{handle_socket, Runtime};

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<Diagnostic>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl ToString) -> Self {
        Self {
            status,
            error: error.to_string(),
            message: message.to_string(),
            diagnostics: None,
            current_revision: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} {id:?}"))
    }

    fn exists(what: &str, id: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "exists", format!("{what} {id:?} already exists"))
    }

    fn stale(current: u64, given: u64) -> Self {
        Self {
            current_revision: Some(current),
            ..Self::new(
                StatusCode::CONFLICT,
                "conflict",
                format!("revision {given} is stale; current revision is {current}"),
            )
        }
    }

    fn bad(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn diagnostics(d: Vec<Diagnostic>) -> Self {
        Self {
            diagnostics: Some(d),
            ..Self::bad("state machine has validation errors")
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<FsmError> for ApiError {
    fn from(e: FsmError) -> Self {
        match e {
            FsmError::Invalid(d) => ApiError::diagnostics(d),
            other => ApiError::bad(other),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Authoring documents held by the service.
#[derive(Debug, Default)]
pub struct Documents {
    pub workflows: BTreeMap<String, Workflow>,
    pub traces: BTreeMap<String, Vec<DetectionFrame>>,
    pub projects: BTreeMap<String, LabelProject>,
    pub fsms: BTreeMap<String, TaskFsm>,
}

#[derive(Clone)]
pub struct AppState {
    pub runtime: Arc<Runtime>,
    pub docs: Arc<Mutex<Documents>>,
}

impl AppState {
    pub fn new(runtime: Arc<Runtime>) -> Self {
        Self {
            runtime,
            docs: Arc::default(),
        }
    }

    fn docs(&self) -> MutexGuard<'_, Documents> {
        self.docs.lock().expect("documents lock")
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/stream", get(stream))
        .route("/packages", get(list_packages))
        .route("/workflows", get(list_workflows).post(create_workflow))
        .route(
            "/workflows/{id}",
            get(get_workflow).put(replace_workflow).delete(delete_workflow),
        )
        .route("/workflows/{id}/split", post(split_workflow))
        .route("/workflows/{id}/merge", post(merge_workflow))
        .route("/workflows/{id}/objects", post(edit_workflow_objects))
        .route("/traces", get(list_traces).post(upload_trace))
        .route("/traces/{id}", get(get_trace).delete(delete_trace))
        .route("/traces/{id}/segment", post(segment_uploaded))
        .route("/traces/{id}/associate", post(associate_uploaded))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project).delete(delete_project))
        .route("/projects/{id}/keyframes/{frame}", put(put_keyframe))
        .route("/projects/{id}/propagate", post(propagate_project))
        .route("/projects/{id}/dedupe", post(dedupe_project))
        .route("/projects/{id}/export", post(export_project))
        .route("/fsms", get(list_fsms).post(create_fsm))
        .route("/fsms/scaffold", post(scaffold_fsm))
        .route("/fsms/{id}", get(get_fsm).put(replace_fsm).delete(delete_fsm))
        .route("/fsms/{id}/validate", post(validate_fsm))
        .route("/fsms/{id}/compile", post(compile_fsm))
        .route("/fsms/{id}/package", get(get_package))
        .route("/simulations", post(run_simulation))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "protocol_version": PROTOCOL_VERSION,
        "max_tokens": s.runtime.max_tokens,
        "packages": s.runtime.store.names(),
        "modules": s.runtime.bus.bindings(),
    }))
}

async fn stream(State(s): State<AppState>, ws: WebSocketUpgrade) -> Response {
    let rt = s.runtime.clone();
    ws.on_upgrade(move |socket| handle_socket(socket, rt))
}

async fn list_packages(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.runtime.store.names())
}

// ---- workflows

async fn list_workflows(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.docs().workflows.keys().cloned().collect())
}

async fn create_workflow(State(s): State<AppState>, Json(w): Json<Workflow>) -> ApiResult<(StatusCode, Json<Workflow>)> {
    w.validate().map_err(ApiError::bad)?;
    let mut docs = s.docs();
    if docs.workflows.contains_key(&w.workflow_id) {
        return Err(ApiError::exists("workflow", &w.workflow_id));
    }
    docs.workflows.insert(w.workflow_id.clone(), w.clone());
    Ok((StatusCode::CREATED, Json(w)))
}

async fn get_workflow(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Workflow>> {
    s.docs()
        .workflows
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("workflow", &id))
}

fn check_revision(current: u64, given: u64) -> ApiResult<()> {
    if current == given {
        Ok(())
    } else {
        Err(ApiError::stale(current, given))
    }
}

/// Full replacement; the body's revision must match the stored one.
async fn replace_workflow(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(mut w): Json<Workflow>,
) -> ApiResult<Json<Workflow>> {
    let mut docs = s.docs();
    let current = docs.workflows.get(&id).ok_or_else(|| ApiError::not_found("workflow", &id))?;
    check_revision(current.revision, w.revision)?;
    if w.workflow_id != id {
        return Err(ApiError::bad("workflow_id does not match the resource path"));
    }
    w.validate().map_err(ApiError::bad)?;
    w.revision += 1;
    docs.workflows.insert(id, w.clone());
    Ok(Json(w))
}

async fn delete_workflow(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.docs()
        .workflows
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found("workflow", &id))
}

#[derive(Debug, Deserialize)]
struct SplitRequest {
    revision: u64,
    frame: u32,
}

#[derive(Debug, Deserialize)]
struct MergeRequest {
    revision: u64,
    step_id: usize,
}

#[derive(Debug, Deserialize)]
struct ObjectsRequest {
    revision: u64,
    step_id: usize,
    #[serde(default)]
    add: Vec<String>,
    #[serde(default)]
    remove: Vec<String>,
    /// `null` clears it; absent leaves it unchanged.
    #[serde(default, with = "double_option")]
    completion_object: Option<Option<String>>,
}

mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
        Option::<String>::deserialize(d).map(Some)
    }
}

fn edit_workflow(
    s: &AppState,
    id: &str,
    revision: u64,
    edit: impl FnOnce(&Workflow) -> ApiResult<Workflow>,
) -> ApiResult<Json<Workflow>> {
    let mut docs = s.docs();
    let current = docs.workflows.get(id).ok_or_else(|| ApiError::not_found("workflow", id))?;
    check_revision(current.revision, revision)?;
    let next = edit(current)?;
    docs.workflows.insert(id.to_string(), next.clone());
    Ok(Json(next))
}

async fn split_workflow(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SplitRequest>,
) -> ApiResult<Json<Workflow>> {
    edit_workflow(&s, &id, req.revision, |w| w.split_step(req.frame).map_err(ApiError::bad))
}

async fn merge_workflow(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<MergeRequest>,
) -> ApiResult<Json<Workflow>> {
    edit_workflow(&s, &id, req.revision, |w| w.merge_steps(req.step_id).map_err(ApiError::bad))
}

async fn edit_workflow_objects(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ObjectsRequest>,
) -> ApiResult<Json<Workflow>> {
    edit_workflow(&s, &id, req.revision, |w| {
        let mut next = w.edit_objects(req.step_id, &req.add, &req.remove).map_err(ApiError::bad)?;
        if let Some(c) = req.completion_object {
            // a second bump would make the edit look like two; keep one
            let revision = next.revision;
            next = next.set_completion_object(req.step_id, c).map_err(ApiError::bad)?;
            next.revision = revision;
        }
        Ok(next)
    })
}

// ---- traces

#[derive(Debug, Deserialize)]
struct TraceUpload {
    trace_id: String,
    frames: Vec<DetectionFrame>,
}

async fn list_traces(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.docs().traces.keys().cloned().collect())
}

async fn upload_trace(State(s): State<AppState>, Json(t): Json<TraceUpload>) -> ApiResult<(StatusCode, Json<Value>)> {
    check_contiguous(&t.frames).map_err(ApiError::bad)?;
    for f in &t.frames {
        for b in f.hands.iter().chain(&f.rois).chain(&f.objects) {
            b.validate().map_err(|e| ApiError::bad(format!("frame {}: {e}", f.frame_index)))?;
        }
    }
    let mut docs = s.docs();
    if docs.traces.contains_key(&t.trace_id) {
        return Err(ApiError::exists("trace", &t.trace_id));
    }
    let n = t.frames.len();
    docs.traces.insert(t.trace_id.clone(), t.frames);
    Ok((StatusCode::CREATED, Json(json!({"trace_id": t.trace_id, "frames": n}))))
}

async fn get_trace(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let docs = s.docs();
    let frames = docs.traces.get(&id).ok_or_else(|| ApiError::not_found("trace", &id))?;
    Ok(Json(json!({"trace_id": id, "frames": frames})))
}

async fn delete_trace(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.docs()
        .traces
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found("trace", &id))
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Deserialize)]
struct SegmentRequest {
    #[serde(default)]
    workflow_id: Option<String>,
    #[serde(default)]
    video_ref: String,
    #[serde(default = "default_fps")]
    fps: f64,
    #[serde(default)]
    config: SegmentationConfig,
}

/// Segments an uploaded trace into a new stored workflow.
async fn segment_uploaded(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SegmentRequest>,
) -> ApiResult<(StatusCode, Json<Workflow>)> {
    let mut docs = s.docs();
    let frames = docs.traces.get(&id).ok_or_else(|| ApiError::not_found("trace", &id))?;
    let run = segment_trace(frames, &req.config).map_err(ApiError::bad)?;
    let workflow_id = req.workflow_id.unwrap_or_else(|| id.clone());
    if docs.workflows.contains_key(&workflow_id) {
        return Err(ApiError::exists("workflow", &workflow_id));
    }
    let w = Workflow::from_segments(&workflow_id, &req.video_ref, req.fps, &run.segments);
    docs.workflows.insert(workflow_id, w.clone());
    Ok((StatusCode::CREATED, Json(w)))
}

#[derive(Debug, Deserialize)]
struct AssociateRequest {
    workflow_id: String,
    revision: u64,
    #[serde(default)]
    config: AssociationConfig,
}

/// Fills a workflow's object lists from the objects handled in an uploaded trace.
async fn associate_uploaded(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<AssociateRequest>,
) -> ApiResult<Json<Value>> {
    let mut docs = s.docs();
    let frames = docs.traces.get(&id).ok_or_else(|| ApiError::not_found("trace", &id))?;
    let w = docs
        .workflows
        .get(&req.workflow_id)
        .ok_or_else(|| ApiError::not_found("workflow", &req.workflow_id))?;
    check_revision(w.revision, req.revision)?;
    let result = extract_associations(frames, &w.segments(), &req.config, None).map_err(ApiError::bad)?;
    let next = w.with_associations(&result);
    let named: BTreeMap<usize, BTreeSet<String>> = result
        .step_associations
        .iter()
        .map(|(k, ids)| (*k, ids.iter().map(|i| result.dictionary.name(*i)).collect()))
        .collect();
    docs.workflows.insert(req.workflow_id.clone(), next.clone());
    Ok(Json(json!({"workflow": next, "step_associations": named})))
}

// ---- label projects

#[derive(Debug, Deserialize)]
struct NewProject {
    project_id: String,
    video_ref: String,
    frame_count: u32,
    classes: Vec<String>,
}

async fn list_projects(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.docs().projects.keys().cloned().collect())
}

async fn create_project(
    State(s): State<AppState>,
    Json(p): Json<NewProject>,
) -> ApiResult<(StatusCode, Json<LabelProject>)> {
    let mut docs = s.docs();
    if docs.projects.contains_key(&p.project_id) {
        return Err(ApiError::exists("project", &p.project_id));
    }
    let classes: Vec<&str> = p.classes.iter().map(String::as_str).collect();
    let project = LabelProject::new(&p.project_id, &p.video_ref, p.frame_count, &classes);
    docs.projects.insert(p.project_id, project.clone());
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<LabelProject>> {
    s.docs()
        .projects
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("project", &id))
}

async fn delete_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.docs()
        .projects
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found("project", &id))
}

#[derive(Debug, Deserialize)]
struct KeyframeRequest {
    revision: u64,
    boxes: Vec<BoundingBox>,
}

async fn put_keyframe(
    State(s): State<AppState>,
    Path((id, frame)): Path<(String, u32)>,
    Json(req): Json<KeyframeRequest>,
) -> ApiResult<Json<LabelProject>> {
    let mut docs = s.docs();
    let p = docs.projects.get(&id).ok_or_else(|| ApiError::not_found("project", &id))?;
    check_revision(p.revision, req.revision)?;
    let next = p.relabel_keyframe(frame, req.boxes).map_err(ApiError::bad)?;
    docs.projects.insert(id, next.clone());
    Ok(Json(next))
}

#[derive(Debug, Deserialize)]
struct PropagateRequest {
    revision: u64,
    from_keyframe: u32,
    until_frame: u32,
    frame_dir: PathBuf,
    #[serde(default)]
    params: PropagationParams,
}

async fn propagate_project(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<PropagateRequest>,
) -> ApiResult<Json<Value>> {
    let mut docs = s.docs();
    let p = docs.projects.get(&id).ok_or_else(|| ApiError::not_found("project", &id))?;
    check_revision(p.revision, req.revision)?;
    let frames = FrameDir::new(&req.frame_dir);
    let (next, written) =
        propagate_labels(p, req.from_keyframe, req.until_frame, &frames, &req.params).map_err(ApiError::bad)?;
    docs.projects.insert(id, next.clone());
    Ok(Json(json!({"project": next, "written": written})))
}

#[derive(Debug, Deserialize)]
struct DedupeRequest {
    frame_dir: PathBuf,
    #[serde(default)]
    threshold: Option<f64>,
}

async fn dedupe_project(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<DedupeRequest>,
) -> ApiResult<Json<Value>> {
    let p = s
        .docs()
        .projects
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("project", &id))?;
    let frames = FrameDir::new(&req.frame_dir);
    let labeled: Vec<u32> = p.labeled_frames().keys().copied().collect();
    let mut images = Vec::with_capacity(labeled.len());
    for &f in &labeled {
        images.push(
            frames
                .frame(f)
                .ok_or_else(|| ApiError::bad(format!("no pixels for frame {f}")))?,
        );
    }
    let threshold = req
        .threshold
        .unwrap_or(stepwise_core::labeling::dedupe::DEFAULT_DEDUPE_THRESHOLD);
    let kept: Vec<u32> = dedupe_frames(&images, threshold).into_iter().map(|i| labeled[i]).collect();
    Ok(Json(json!({"kept": kept, "threshold": threshold})))
}

#[derive(Debug, Deserialize)]
struct ExportRequest {
    frame_dir: PathBuf,
    out_dir: PathBuf,
    #[serde(default)]
    options: ExportOptions,
}

async fn export_project(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ExportRequest>,
) -> ApiResult<Json<Value>> {
    let p = s
        .docs()
        .projects
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("project", &id))?;
    let frames = FrameDir::new(&req.frame_dir);
    let ds = export_dataset(&p, &frames, &req.out_dir, &req.options).map_err(ApiError::bad)?;
    Ok(Json(serde_json::to_value(ds).expect("dataset serializes")))
}

// ---- state machines

async fn list_fsms(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.docs().fsms.keys().cloned().collect())
}

async fn create_fsm(State(s): State<AppState>, Json(f): Json<TaskFsm>) -> ApiResult<(StatusCode, Json<TaskFsm>)> {
    let mut docs = s.docs();
    if docs.fsms.contains_key(&f.name) {
        return Err(ApiError::exists("fsm", &f.name));
    }
    docs.fsms.insert(f.name.clone(), f.clone());
    Ok((StatusCode::CREATED, Json(f)))
}

async fn get_fsm(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TaskFsm>> {
    s.docs()
        .fsms
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("fsm", &id))
}

async fn replace_fsm(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(f): Json<TaskFsm>,
) -> ApiResult<Json<TaskFsm>> {
    if f.name != id {
        return Err(ApiError::bad("fsm name does not match the resource path"));
    }
    let mut docs = s.docs();
    if !docs.fsms.contains_key(&id) {
        return Err(ApiError::not_found("fsm", &id));
    }
    docs.fsms.insert(id, f.clone());
    Ok(Json(f))
}

async fn delete_fsm(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.docs()
        .fsms
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found("fsm", &id))
}

#[derive(Debug, Deserialize)]
struct ScaffoldRequest {
    workflow_id: String,
}

async fn scaffold_fsm(
    State(s): State<AppState>,
    Json(req): Json<ScaffoldRequest>,
) -> ApiResult<(StatusCode, Json<TaskFsm>)> {
    let mut docs = s.docs();
    let w = docs
        .workflows
        .get(&req.workflow_id)
        .ok_or_else(|| ApiError::not_found("workflow", &req.workflow_id))?;
    let fsm = scaffold_from_workflow(w)?;
    if docs.fsms.contains_key(&fsm.name) {
        return Err(ApiError::exists("fsm", &fsm.name));
    }
    docs.fsms.insert(fsm.name.clone(), fsm.clone());
    Ok((StatusCode::CREATED, Json(fsm)))
}

async fn validate_fsm(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let docs = s.docs();
    let f = docs.fsms.get(&id).ok_or_else(|| ApiError::not_found("fsm", &id))?;
    let d = validate(f);
    Ok(Json(json!({"ok": !has_errors(&d), "diagnostics": d})))
}

/// Compiles and publishes the package to the streaming runtime.
async fn compile_fsm(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TaskPackage>> {
    let fsm = s
        .docs()
        .fsms
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("fsm", &id))?;
    let pkg = compile(&fsm)?;
    s.runtime
        .store
        .insert(pkg.clone())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e))?;
    Ok(Json(pkg))
}

async fn get_package(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let pkg = s
        .runtime
        .store
        .get(&id)
        .ok_or_else(|| ApiError::not_found("package", &id))?;
    Ok((
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        pkg.to_bytes(),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct SimulationRequest {
    /// A published package name, or
    #[serde(default)]
    package: Option<String>,
    /// a stored state machine, compiled on the fly.
    #[serde(default)]
    fsm_id: Option<String>,
    #[serde(default)]
    trace_id: Option<String>,
    #[serde(default)]
    frames: Option<Vec<DetectionFrame>>,
}

async fn run_simulation(State(s): State<AppState>, Json(req): Json<SimulationRequest>) -> ApiResult<Json<Value>> {
    let pkg: Arc<TaskPackage> = match (&req.package, &req.fsm_id) {
        (Some(name), None) => s.runtime.store.get(name).ok_or_else(|| ApiError::not_found("package", name))?,
        (None, Some(id)) => {
            let fsm = s.docs().fsms.get(id).cloned().ok_or_else(|| ApiError::not_found("fsm", id))?;
            Arc::new(compile(&fsm)?)
        }
        _ => return Err(ApiError::bad("give exactly one of package or fsm_id")),
    };
    let frames = match (req.trace_id, req.frames) {
        (Some(id), None) => s.docs().traces.get(&id).cloned().ok_or_else(|| ApiError::not_found("trace", &id))?,
        (None, Some(f)) => f,
        _ => return Err(ApiError::bad("give exactly one of trace_id or frames")),
    };
    check_contiguous(&frames).map_err(ApiError::bad)?;
    let tl = simulate(&pkg, &frames).map_err(ApiError::bad)?;
    Ok(Json(json!({"package": pkg.name, "checksum": pkg.checksum, "timeline": tl})))
}
