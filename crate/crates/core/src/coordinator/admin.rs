//! Admin actions and history edits.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ProjectState;
use crate::domain::{Action, Annotation, AnnotationSource, Coder, RecordEvent, RecordStatus};
use crate::error::{Error, Result};
use crate::ids::{AnnotationId, LabelId, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Label { label: LabelId },
    Discard,
}

impl ProjectState {
    fn check_label(&self, label: LabelId) -> Result<()> {
        self.project
            .label(label)
            .map(|_| ())
            .ok_or_else(|| Error::InvalidInput("label does not belong to this project".into()))
    }

    /// Resolves a skipped or disagreed record.
    pub fn adjudicate(
        &mut self,
        record: RecordId,
        decision: Decision,
        actor: &Coder,
        now: DateTime<Utc>,
    ) -> Result<()> {
        let status = self.record(record).ok_or(Error::NotFound("record"))?.status;
        let action = match status {
            RecordStatus::PendingSkipAdjudication => Action::ResolveSkips,
            RecordStatus::PendingIrrAdjudication => Action::AdjudicateIrr,
            _ => {
                self.authorize(actor, Action::ResolveSkips)?;
                return Err(Error::Conflict("record is not awaiting adjudication".into()));
            }
        };
        self.authorize(actor, action)?;
        match decision {
            Decision::Label { label } => {
                self.check_label(label)?;
                self.record_mut(record)?.apply(RecordEvent::Adjudicate)?;
                self.add_annotation(
                    record,
                    actor.id,
                    label,
                    0,
                    AnnotationSource::AdminAdjudication,
                    now,
                );
                self.record_mut(record)?.final_label = Some(label);
            }
            Decision::Discard => {
                self.record_mut(record)?.apply(RecordEvent::Discard)?;
            }
        }
        self.cancel_pending(record);
        self.check_batch_completion(record);
        Ok(())
    }

    /// Removes an out-of-scope record from the project for good.
    pub fn discard(&mut self, record: RecordId, actor: &Coder, _now: DateTime<Utc>) -> Result<()> {
        self.authorize(actor, Action::Discard)?;
        let current = self.record(record).ok_or(Error::NotFound("record"))?;
        if current.status.is_terminal() {
            return Err(Error::Conflict(format!(
                "record is already {:?}",
                current.status
            )));
        }
        self.record_mut(record)?.apply(RecordEvent::Discard)?;
        self.cancel_pending(record);
        self.check_batch_completion(record);
        Ok(())
    }

    /// Labels a record directly, outside the assignment flow. Only records
    /// nobody is working on qualify.
    pub fn admin_label(
        &mut self,
        record: RecordId,
        label: LabelId,
        actor: &Coder,
        now: DateTime<Utc>,
    ) -> Result<()> {
        self.authorize(actor, Action::AdminLabel)?;
        self.check_label(label)?;
        let status = self.record(record).ok_or(Error::NotFound("record"))?.status;
        if !matches!(status, RecordStatus::Unlabeled | RecordStatus::InBatch) {
            return Err(Error::Conflict("record is in flight".into()));
        }
        let r = self.record_mut(record)?;
        r.apply(RecordEvent::AdminLabel)?;
        r.final_label = Some(label);
        self.add_annotation(
            record,
            actor.id,
            label,
            0,
            AnnotationSource::AdminAdjudication,
            now,
        );
        self.check_batch_completion(record);
        Ok(())
    }

    /// Live annotations by `coder`, newest first.
    pub fn history(&self, coder: &Coder) -> Result<Vec<&Annotation>> {
        self.authorize(coder, Action::ViewHistory)?;
        let mut items: Vec<&Annotation> = self
            .annotations()
            .iter()
            .filter(|a| a.coder_id == coder.id && !a.superseded)
            .collect();
        items.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.sequence.cmp(&a.sequence)));
        Ok(items)
    }

    /// Replaces one of the actor's annotations with a new label. The old
    /// annotation is kept, marked superseded.
    pub fn modify_annotation(
        &mut self,
        annotation: AnnotationId,
        actor: &Coder,
        label: LabelId,
        now: DateTime<Utc>,
    ) -> Result<AnnotationId> {
        let old = self
            .annotation(annotation)
            .ok_or(Error::NotFound("annotation"))?
            .clone();
        if old.coder_id != actor.id {
            return Err(Error::PermissionDenied);
        }
        self.authorize(actor, Action::ViewHistory)?;
        self.check_label(label)?;
        if old.superseded {
            return Err(Error::Conflict("annotation already superseded".into()));
        }
        let status = self.record(old.record_id).ok_or(Error::NotFound("record"))?.status;
        if status == RecordStatus::Discarded {
            return Err(Error::Conflict("record was discarded".into()));
        }
        let id = self.add_annotation(old.record_id, actor.id, label, old.elapsed_ms, old.source, now);
        if status == RecordStatus::Labeled {
            if let Some(label) = self.resolved_label(old.record_id) {
                self.record_mut(old.record_id)?.final_label = Some(label);
            }
        }
        Ok(id)
    }

    /// Final label implied by the live annotations: the latest adjudication
    /// if any, else the unanimous vote, else `None`.
    fn resolved_label(&self, record: RecordId) -> Option<LabelId> {
        let live: Vec<&Annotation> = self
            .record_annotations(record)
            .filter(|a| !a.superseded)
            .collect();
        if let Some(adj) = live
            .iter()
            .filter(|a| a.source == AnnotationSource::AdminAdjudication)
            .max_by_key(|a| (a.created_at, a.sequence))
        {
            return Some(adj.label_id);
        }
        let first = live.first()?.label_id;
        live.iter().all(|a| a.label_id == first).then_some(first)
    }
}
