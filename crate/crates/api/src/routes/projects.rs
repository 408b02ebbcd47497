use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use labelforge_core::active_learning::run_cycle;
use labelforge_core::domain::{validate_project_config, LabelSpec, SettingsPatch};
use labelforge_core::ingest::{parse_upload, IngestReport};
use labelforge_core::{
    Action, Batch, BatchStatus, CodebookInfo, Coder, Project, ProjectSettings, ProjectState,
    RecordStatus, Role, SelectionMethod,
};
use serde::{Deserialize, Serialize};

use super::{parse_id, require_member, Actor, JsonBody};
use crate::app::App;
use crate::auth::{create_account, AccountError};
use crate::error::{ApiError, ApiResult};
use crate::store::StoreError;

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub description: String,
    pub created_at: DateTime<Utc>,
    pub records: usize,
    pub labeled: usize,
}

pub async fn list(State(app): State<Arc<App>>, Actor(actor): Actor) -> ApiResult<Json<Vec<ProjectSummary>>> {
    let mut out = Vec::new();
    for id in app.project_ids() {
        let summary = app.read(id, |s| {
            if require_member(s, &actor).is_err() {
                return Ok(None);
            }
            Ok(Some(ProjectSummary {
                id: s.project.id.to_string(),
                name: s.project.name.clone(),
                description: s.project.description.clone(),
                created_at: s.project.created_at,
                records: s.records().len(),
                labeled: s.labeled_records().count(),
            }))
        })?;
        out.extend(summary);
    }
    out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
    Ok(Json(out))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub index: usize,
    pub selection_method: SelectionMethod,
    pub status: BatchStatus,
    pub size: usize,
    pub double_coded: usize,
    pub finished: usize,
}

fn batch_summary(state: &ProjectState, batch: &Batch) -> BatchSummary {
    BatchSummary {
        index: batch.index,
        selection_method: batch.selection_method,
        status: batch.status,
        size: batch.record_ids.len(),
        double_coded: batch.double_coded,
        finished: batch
            .record_ids
            .iter()
            .filter(|r| state.record(**r).is_some_and(|r| r.status.is_terminal()))
            .count(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectDetail {
    pub project: Project,
    pub status_counts: BTreeMap<RecordStatus, usize>,
    pub batches: Vec<BatchSummary>,
    pub members: Vec<Coder>,
    pub snapshots: usize,
    pub cycle_in_progress: bool,
}

pub async fn detail(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<ProjectDetail>> {
    let id = parse_id(&id, "project")?;
    let cycle_in_progress = app.cycle_in_progress(id);
    app.read(id, |s| {
        require_member(s, &actor)?;
        let mut status_counts = BTreeMap::new();
        for r in s.records() {
            *status_counts.entry(r.status).or_insert(0) += 1;
        }
        Ok(Json(ProjectDetail {
            project: s.project.clone(),
            status_counts,
            batches: s.batches().iter().map(|b| batch_summary(s, b)).collect(),
            members: s.members().cloned().collect(),
            snapshots: s.snapshots().len(),
            cycle_in_progress,
        }))
    })
}

#[derive(Debug, Default, Deserialize)]
struct Metadata {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    settings: Option<ProjectSettings>,
    /// Usernames of existing accounts to add as coders.
    #[serde(default)]
    coders: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LabelInput {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        description: String,
    },
}

impl From<LabelInput> for LabelSpec {
    fn from(input: LabelInput) -> Self {
        match input {
            LabelInput::Name(name) => LabelSpec::from(name.as_str()),
            LabelInput::Full { name, description } => LabelSpec { name, description },
        }
    }
}

struct Upload {
    filename: String,
    content_type: String,
    bytes: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedProject {
    pub id: String,
    pub ingest: IngestReport,
    pub batch: Option<BatchSummary>,
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "payload_too_large", "upload exceeds the size limit")
    } else {
        ApiError::new(status, "bad_request", e.body_text())
    }
}

/// Creates a project from a multipart form with parts `metadata` (JSON),
/// `labels` (JSON array of names or `{name, description}`), `data` (CSV)
/// and optionally `codebook` (any file).
pub async fn create(State(app): State<Arc<App>>, actor: Actor, mut form: Multipart) -> ApiResult<Response> {
    actor.require_admin()?;
    let actor = actor.0;
    let (mut metadata, mut labels, mut data, mut codebook) = (None, None, None, None);
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        let filename = field.file_name().unwrap_or("codebook").to_string();
        let content_type = field
            .content_type()
            .unwrap_or("application/octet-stream")
            .to_string();
        let bytes = field.bytes().await.map_err(multipart_error)?.to_vec();
        match name.as_str() {
            "metadata" => metadata = Some(bytes),
            "labels" => labels = Some(bytes),
            "data" => data = Some(bytes),
            "codebook" => {
                codebook = Some(Upload {
                    filename,
                    content_type,
                    bytes,
                })
            }
            other => return Err(ApiError::bad_request(format!("unexpected form part {other:?}"))),
        }
    }

    let mut errors = Vec::new();
    let metadata: Metadata = match metadata.map(|m| serde_json::from_slice(&m)) {
        Some(Ok(m)) => m,
        Some(Err(e)) => {
            errors.push(format!("metadata: {e}"));
            Metadata::default()
        }
        None => {
            errors.push("missing metadata part".into());
            Metadata::default()
        }
    };
    let labels: Vec<LabelSpec> = match labels.map(|l| serde_json::from_slice::<Vec<LabelInput>>(&l)) {
        Some(Ok(l)) => l.into_iter().map(LabelSpec::from).collect(),
        Some(Err(e)) => {
            errors.push(format!("labels: {e}"));
            Vec::new()
        }
        None => {
            errors.push("missing labels part".into());
            Vec::new()
        }
    };
    let Some(data) = data else {
        errors.push("missing data part".into());
        return Err(ApiError::bad_request("invalid project").with_details(errors));
    };
    let label_names: Vec<String> = labels.iter().map(|l| l.name.clone()).collect();
    let (rows, report) = match parse_upload(&data, &label_names) {
        Ok(parsed) => parsed,
        Err(e) => {
            let mut err = ApiError::from(e);
            err.details.extend(errors);
            return Err(err);
        }
    };
    if rows.is_empty() {
        errors.push("no usable records in data".into());
    }
    let mut members = Vec::new();
    for username in &metadata.coders {
        match app.store.user_by_name(username)? {
            Some(user) => members.push(user.coder),
            None => errors.push(format!("unknown coder account {username:?}")),
        }
    }
    let settings = metadata.settings.clone().unwrap_or_default();
    let now = Utc::now();
    let project = validate_project_config(&metadata.name, &metadata.description, &labels, &settings, &rows, now);
    let mut project = match project {
        Ok(p) if errors.is_empty() => p,
        Ok(_) => return Err(ApiError::bad_request("invalid project").with_details(errors)),
        Err(mut list) => {
            errors.append(&mut list);
            return Err(ApiError::bad_request("invalid project").with_details(errors));
        }
    };
    project.codebook = codebook.as_ref().map(|c| CodebookInfo {
        filename: c.filename.clone(),
        content_type: c.content_type.clone(),
        size: c.bytes.len(),
    });

    let created = tokio::task::spawn_blocking(move || -> ApiResult<(String, Option<BatchSummary>)> {
        let mut state = ProjectState::create(project, &rows, &actor, now)?;
        for m in members {
            state.add_member(m);
        }
        run_cycle(&mut state, now)?;
        let batch = state.batches().last().map(|b| batch_summary(&state, b));
        let id = app.insert_project(state, codebook.as_ref().map(|c| c.bytes.as_slice()))?;
        Ok((id.to_string(), batch))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let body = CreatedProject {
        id: created.0,
        ingest: report,
        batch: created.1,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

pub async fn update_settings(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(patch): JsonBody<SettingsPatch>,
) -> ApiResult<Json<ProjectSettings>> {
    let id = parse_id(&id, "project")?;
    app.mutate_async(id, move |s| {
        s.update_settings(&actor, &patch)?;
        Ok(Json(s.project.settings.clone()))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct AddCoderRequest {
    pub username: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AddCoderResponse {
    pub coder: Coder,
    /// Set only when a new account was created.
    pub password: Option<String>,
}

/// Adds a coder to the project, creating the account (with a generated
/// password, returned once) if the username is new.
pub async fn add_coder(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<AddCoderRequest>,
) -> ApiResult<Response> {
    let id = parse_id(&id, "project")?;
    app.read(id, |s| s.authorize(&actor, Action::EditSettings).map_err(ApiError::from))?;
    let (coder, password) = match app.store.user_by_name(&req.username)? {
        Some(user) => (user.coder, None),
        None => {
            let store_app = Arc::clone(&app);
            let username = req.username.clone();
            let created = tokio::task::spawn_blocking(move || create_account(&store_app.store, &username, Role::Coder, Utc::now()))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            match created {
                Ok((coder, password)) => (coder, Some(password)),
                Err(AccountError::InvalidUsername(msg)) => return Err(ApiError::bad_request(msg)),
                Err(AccountError::Store(StoreError::UsernameTaken(name))) => {
                    return Err(ApiError::new(StatusCode::CONFLICT, "conflict", format!("username {name:?} is taken")))
                }
                Err(e) => return Err(ApiError::internal(e.to_string())),
            }
        }
    };
    let member = coder.clone();
    app.mutate_async(id, move |s| {
        s.authorize(&actor, Action::EditSettings)?;
        s.add_member(member);
        Ok(())
    })
    .await?;
    let status = if password.is_some() { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(AddCoderResponse { coder, password })).into_response())
}

pub async fn codebook(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id, "project")?;
    let info = app.read(id, |s| {
        require_member(s, &actor)?;
        s.project.codebook.clone().ok_or_else(|| ApiError::not_found("codebook"))
    })?;
    let bytes = app.store.codebook(id)?.ok_or_else(|| ApiError::not_found("codebook"))?;
    let disposition = format!("inline; filename=\"{}\"", info.filename.replace('"', ""));
    Ok((
        [(header::CONTENT_TYPE, info.content_type), (header::CONTENT_DISPOSITION, disposition)],
        bytes,
    )
        .into_response())
}
