use std::sync::Arc;

use axum::extract::{Path, State};
use axum::Json;
use chrono::Utc;
use labelforge_core::coordinator::Decision;
use labelforge_core::{Action, CoderId, LabelId, ProjectState, Record, RecordId, RecordStatus};
use serde::{Deserialize, Serialize};

use super::{parse_id, Actor, JsonBody};
use crate::app::App;
use crate::error::{ApiError, ApiResult};

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueRecord {
    pub id: RecordId,
    pub external_id: Option<String>,
    pub text: String,
    pub status: RecordStatus,
    pub upload_order: usize,
}

impl From<&Record> for QueueRecord {
    fn from(r: &Record) -> Self {
        Self {
            id: r.id,
            external_id: r.external_id.clone(),
            text: r.text.clone(),
            status: r.status,
            upload_order: r.upload_order,
        }
    }
}

pub async fn skipped(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<Vec<QueueRecord>>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::ResolveSkips)?;
        Ok(Json(s.skipped_queue().into_iter().map(QueueRecord::from).collect()))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Vote {
    pub coder_id: CoderId,
    pub username: String,
    pub label_id: LabelId,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DisagreementBody {
    pub record: QueueRecord,
    pub votes: Vec<Vote>,
}

fn vote(s: &ProjectState, coder: CoderId, label: LabelId) -> Vote {
    Vote {
        coder_id: coder,
        username: s.member(coder).map(|c| c.username.clone()).unwrap_or_else(|| coder.to_string()),
        label_id: label,
        label: s.project.label(label).map(|l| l.name.clone()).unwrap_or_default(),
    }
}

pub async fn disagreements(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<DisagreementBody>>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::AdjudicateIrr)?;
        let items = s
            .disagreements()
            .into_iter()
            .map(|d| DisagreementBody {
                record: QueueRecord::from(&d.record),
                votes: d.votes.iter().map(|(c, l)| vote(s, *c, *l)).collect(),
            })
            .collect();
        Ok(Json(items))
    })
    .await
}

/// Exactly one of `label_id` and `discard` must be given.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct AdjudicateRequest {
    #[serde(default)]
    pub label_id: Option<LabelId>,
    #[serde(default)]
    pub discard: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordStateBody {
    pub record: QueueRecord,
    pub final_label: Option<LabelId>,
}

fn record_state(s: &ProjectState, id: RecordId) -> ApiResult<Json<RecordStateBody>> {
    let r = s.record(id).ok_or_else(|| ApiError::not_found("record"))?;
    Ok(Json(RecordStateBody {
        record: QueueRecord::from(r),
        final_label: r.final_label,
    }))
}

pub async fn adjudicate(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<AdjudicateRequest>,
) -> ApiResult<Json<RecordStateBody>> {
    let record: RecordId = parse_id(&id, "record")?;
    let decision = match (req.label_id, req.discard) {
        (Some(label), false) => Decision::Label { label },
        (None, true) => Decision::Discard,
        _ => return Err(ApiError::bad_request("give exactly one of label_id and discard=true")),
    };
    let project = app.project_of_record(record)?;
    app.mutate_async(project, move |s| {
        s.adjudicate(record, decision, &actor, Utc::now())?;
        record_state(s, record)
    })
    .await
}

pub async fn discard(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<RecordStateBody>> {
    let record: RecordId = parse_id(&id, "record")?;
    let project = app.project_of_record(record)?;
    app.mutate_async(project, move |s| {
        s.discard(record, &actor, Utc::now())?;
        record_state(s, record)
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdminLabelRequest {
    pub label_id: LabelId,
}

pub async fn admin_label(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<AdminLabelRequest>,
) -> ApiResult<Json<RecordStateBody>> {
    let record: RecordId = parse_id(&id, "record")?;
    let project = app.project_of_record(record)?;
    app.mutate_async(project, move |s| {
        s.admin_label(record, req.label_id, &actor, Utc::now())?;
        record_state(s, record)
    })
    .await
}
