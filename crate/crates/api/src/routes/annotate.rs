use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use chrono::{DateTime, Utc};
use labelforge_core::{
    AnnotationId, AnnotationSource, AssignmentId, LabelClass, LabelId, ProjectId, RecordId,
    SubmitOutcome,
};
use serde::{Deserialize, Serialize};

use super::{parse_id, Actor, JsonBody, API_PREFIX};
use crate::app::App;
use crate::error::{ApiError, ApiResult};

#[derive(Debug, Serialize, Deserialize)]
pub struct ServedRecord {
    pub id: RecordId,
    pub external_id: Option<String>,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ServedAssignmentBody {
    pub id: AssignmentId,
    pub project_id: ProjectId,
    pub lease_expires_at: DateTime<Utc>,
    pub double_coded: bool,
    pub record: ServedRecord,
    pub labels: Vec<LabelClass>,
    pub codebook_url: Option<String>,
}

/// `assignment` is null when nothing is available right now.
#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    pub assignment: Option<ServedAssignmentBody>,
}

pub async fn next(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<NextResponse>> {
    let id: ProjectId = parse_id(&id, "project")?;
    app.mutate_async(id, move |s| {
        let served = s.next_assignment(&actor, Utc::now())?;
        let assignment = served.map(|served| ServedAssignmentBody {
            id: served.assignment.id,
            project_id: id,
            lease_expires_at: served.assignment.lease_expires_at,
            double_coded: served.double_coded,
            record: ServedRecord {
                id: served.record.id,
                external_id: served.record.external_id,
                text: served.record.text,
            },
            labels: s.project.labels.clone(),
            codebook_url: s
                .project
                .codebook
                .as_ref()
                .map(|_| format!("{API_PREFIX}/projects/{id}/codebook")),
        });
        Ok(Json(NextResponse { assignment }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub label_id: LabelId,
}

pub async fn label(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<LabelRequest>,
) -> ApiResult<Json<SubmitOutcome>> {
    let assignment: AssignmentId = parse_id(&id, "assignment")?;
    let project = app.project_of_assignment(assignment)?;
    app.mutate_async(project, move |s| {
        Ok(Json(s.submit_label(assignment, &actor, req.label_id, Utc::now())?))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SkipResponse {
    pub skipped: RecordId,
}

pub async fn skip(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<SkipResponse>> {
    let assignment: AssignmentId = parse_id(&id, "assignment")?;
    let project = app.project_of_assignment(assignment)?;
    app.mutate_async(project, move |s| {
        s.skip(assignment, &actor, Utc::now())?;
        let record = s.assignment(assignment).map(|a| a.record_id).ok_or_else(|| ApiError::not_found("assignment"))?;
        Ok(Json(SkipResponse { skipped: record }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct Page {
    pub page: Option<usize>,
    pub per_page: Option<usize>,
}

pub const DEFAULT_PER_PAGE: usize = 50;
pub const MAX_PER_PAGE: usize = 500;

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryItem {
    pub annotation_id: AnnotationId,
    pub record_id: RecordId,
    pub text: String,
    pub label_id: LabelId,
    pub label: String,
    pub source: AnnotationSource,
    pub elapsed_ms: u64,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub items: Vec<HistoryItem>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}

/// The caller's live annotations, newest first; pages are 1-based.
pub async fn history(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    Query(page): Query<Page>,
) -> ApiResult<Json<HistoryResponse>> {
    let id: ProjectId = parse_id(&id, "project")?;
    let per_page = page.per_page.unwrap_or(DEFAULT_PER_PAGE).clamp(1, MAX_PER_PAGE);
    let page = page.page.unwrap_or(1).max(1);
    app.read_async(id, move |s| {
        let all = s.history(&actor)?;
        let items = all
            .iter()
            .skip((page - 1) * per_page)
            .take(per_page)
            .map(|a| HistoryItem {
                annotation_id: a.id,
                record_id: a.record_id,
                text: s.record(a.record_id).map(|r| r.text.clone()).unwrap_or_default(),
                label_id: a.label_id,
                label: s.project.label(a.label_id).map(|l| l.name.clone()).unwrap_or_default(),
                source: a.source,
                elapsed_ms: a.elapsed_ms,
                created_at: a.created_at,
            })
            .collect();
        Ok(Json(HistoryResponse {
            items,
            page,
            per_page,
            total: all.len(),
        }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModifyResponse {
    pub annotation_id: AnnotationId,
    pub superseded: AnnotationId,
}

pub async fn modify(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<LabelRequest>,
) -> ApiResult<Json<ModifyResponse>> {
    let annotation: AnnotationId = parse_id(&id, "annotation")?;
    let project = app.project_of_annotation(annotation)?;
    app.mutate_async(project, move |s| {
        let new_id = s.modify_annotation(annotation, &actor, req.label_id, Utc::now())?;
        Ok(Json(ModifyResponse {
            annotation_id: new_id,
            superseded: annotation,
        }))
    })
    .await
}
