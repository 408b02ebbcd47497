//! Serving records to coders under time-limited leases.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::ProjectState;
use crate::domain::{Action, AnnotationSource, Coder, Record, RecordEvent, RecordStatus};
use crate::error::{Error, Result};
use crate::ids::{AssignmentId, CoderId, LabelId, ProjectId, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentResolution {
    Pending,
    Labeled,
    Skipped,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: AssignmentId,
    pub project_id: ProjectId,
    pub record_id: RecordId,
    pub coder_id: CoderId,
    pub issued_at: DateTime<Utc>,
    pub lease_expires_at: DateTime<Utc>,
    pub displayed_at: DateTime<Utc>,
    pub resolution: AssignmentResolution,
    /// Issue order within the project.
    pub sequence: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServedAssignment {
    pub assignment: Assignment,
    pub record: Record,
    pub double_coded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Finalized { label: LabelId },
    AwaitingCoders,
    ConflictQueued,
}

impl ProjectState {
    fn pending_for(&self, coder: CoderId) -> Option<usize> {
        self.pending
            .iter()
            .copied()
            .find(|i| self.assignments[*i].coder_id == coder)
    }

    fn served(&self, index: usize) -> ServedAssignment {
        let assignment = self.assignments[index].clone();
        let record = self
            .record(assignment.record_id)
            .expect("assignment refers to a project record")
            .clone();
        ServedAssignment {
            double_coded: self.is_double_coded(record.id),
            assignment,
            record,
        }
    }

    /// Serves the coder's current lease if one is live, otherwise leases the
    /// lowest-upload-order record of the open batch that still needs coders
    /// and that this coder has not annotated. `None` when nothing is
    /// available.
    pub fn next_assignment(
        &mut self,
        actor: &Coder,
        now: DateTime<Utc>,
    ) -> Result<Option<ServedAssignment>> {
        self.authorize(actor, Action::Annotate)?;
        self.expire_leases(now);
        if let Some(i) = self.pending_for(actor.id) {
            return Ok(Some(self.served(i)));
        }
        let Some(batch) = self.open_batch() else {
            return Ok(None);
        };
        let mut candidates: Vec<(usize, RecordId)> = batch
            .record_ids
            .iter()
            .filter_map(|id| self.record(*id).map(|r| (r.upload_order, r.id)))
            .collect();
        candidates.sort_unstable();

        let chosen = candidates.into_iter().map(|(_, id)| id).find(|id| {
            let record = self.record(*id).expect("batch member exists");
            if !matches!(record.status, RecordStatus::InBatch | RecordStatus::Assigned) {
                return false;
            }
            let already_annotated = self
                .record_annotations(*id)
                .any(|a| a.coder_id == actor.id && !a.superseded);
            if already_annotated {
                return false;
            }
            self.engaged_coders(*id).len() < self.coder_capacity(*id)
        });
        let Some(record_id) = chosen else {
            return Ok(None);
        };

        self.record_mut(record_id)?.apply(RecordEvent::Assign)?;
        let assignment = Assignment {
            id: AssignmentId::new(),
            project_id: self.project.id,
            record_id,
            coder_id: actor.id,
            issued_at: now,
            lease_expires_at: now + Duration::seconds(self.project.settings.lease_ttl_seconds as i64),
            displayed_at: now,
            resolution: AssignmentResolution::Pending,
            sequence: self.assignments.len(),
        };
        self.insert_assignment(assignment);
        Ok(Some(self.served(self.assignments.len() - 1)))
    }

    fn owned_assignment(&self, id: AssignmentId, actor: &Coder) -> Result<usize> {
        let i = *self
            .assignment_index
            .get(&id)
            .ok_or(Error::NotFound("assignment"))?;
        if self.assignments[i].coder_id != actor.id {
            return Err(Error::PermissionDenied);
        }
        self.authorize(actor, Action::Annotate)?;
        Ok(i)
    }

    /// A lapsed lease still counts if nobody else was given the record after
    /// it lapsed and the record can take this coder's vote.
    fn late_submission_allowed(&self, index: usize) -> bool {
        let a = &self.assignments[index];
        let Some(record) = self.record(a.record_id) else {
            return false;
        };
        if !matches!(record.status, RecordStatus::InBatch | RecordStatus::Assigned) {
            return false;
        }
        let reassigned = self.assignments_by_record[&a.record_id].iter().any(|j| {
            let other = &self.assignments[*j];
            other.coder_id != a.coder_id && other.issued_at >= a.lease_expires_at
        });
        if reassigned {
            return false;
        }
        let mut engaged = self.engaged_coders(a.record_id);
        if engaged.contains(&a.coder_id) && !self.pending.contains(&index) {
            // already voted through another assignment
            return false;
        }
        engaged.remove(&a.coder_id);
        engaged.len() < self.coder_capacity(a.record_id)
    }

    fn close_assignment(&mut self, index: usize, resolution: AssignmentResolution) {
        self.pending.remove(&index);
        self.assignments[index].resolution = resolution;
        self.changes.assignments.insert(self.assignments[index].id);
    }

    /// Expires every other live lease on `record`.
    pub(super) fn cancel_pending(&mut self, record: RecordId) {
        let live: Vec<usize> = self
            .assignments_by_record
            .get(&record)
            .into_iter()
            .flatten()
            .copied()
            .filter(|i| self.pending.contains(i))
            .collect();
        for i in live {
            self.close_assignment(i, AssignmentResolution::Expired);
        }
    }

    pub fn submit_label(
        &mut self,
        assignment: AssignmentId,
        actor: &Coder,
        label: LabelId,
        now: DateTime<Utc>,
    ) -> Result<SubmitOutcome> {
        let i = self.owned_assignment(assignment, actor)?;
        if self.project.label(label).is_none() {
            return Err(Error::InvalidInput("label does not belong to this project".into()));
        }
        let a = self.assignments[i].clone();
        match a.resolution {
            AssignmentResolution::Labeled | AssignmentResolution::Skipped => {
                return Err(Error::Conflict("assignment already resolved".into()))
            }
            AssignmentResolution::Pending if now <= a.lease_expires_at => {}
            AssignmentResolution::Pending | AssignmentResolution::Expired => {
                if !self.late_submission_allowed(i) {
                    return Err(Error::Conflict("lease expired and record was reassigned".into()));
                }
            }
        }

        if self.record(a.record_id).map(|r| r.status) == Some(RecordStatus::InBatch) {
            self.record_mut(a.record_id)?.apply(RecordEvent::Assign)?;
        }
        self.close_assignment(i, AssignmentResolution::Labeled);
        let elapsed_ms = (now - a.displayed_at).num_milliseconds().max(0) as u64;
        self.add_annotation(
            a.record_id,
            actor.id,
            label,
            elapsed_ms,
            AnnotationSource::Coder,
            now,
        );

        let votes = self.live_coder_votes(a.record_id);
        let capacity = self.coder_capacity(a.record_id);
        let outcome = if votes.len() < capacity {
            SubmitOutcome::AwaitingCoders
        } else if votes.iter().all(|(_, l)| *l == votes[0].1) {
            let record = self.record_mut(a.record_id)?;
            record.apply(RecordEvent::Label)?;
            record.final_label = Some(votes[0].1);
            SubmitOutcome::Finalized { label: votes[0].1 }
        } else {
            self.record_mut(a.record_id)?.apply(RecordEvent::IrrConflict)?;
            SubmitOutcome::ConflictQueued
        };
        if outcome != SubmitOutcome::AwaitingCoders {
            self.cancel_pending(a.record_id);
        }
        self.check_batch_completion(a.record_id);
        Ok(outcome)
    }

    /// Sends the record to the admin skip queue.
    pub fn skip(&mut self, assignment: AssignmentId, actor: &Coder, _now: DateTime<Utc>) -> Result<()> {
        let i = self.owned_assignment(assignment, actor)?;
        if self.assignments[i].resolution != AssignmentResolution::Pending {
            return Err(Error::Conflict("assignment already resolved".into()));
        }
        let record = self.assignments[i].record_id;
        self.record_mut(record)?.apply(RecordEvent::Skip)?;
        self.close_assignment(i, AssignmentResolution::Skipped);
        self.cancel_pending(record);
        Ok(())
    }

    /// Expires leases that lapsed before `now`. Records nobody else is
    /// working on return to the pool.
    pub fn expire_leases(&mut self, now: DateTime<Utc>) -> usize {
        let lapsed: Vec<usize> = self
            .pending
            .iter()
            .copied()
            .filter(|i| self.assignments[*i].lease_expires_at < now)
            .collect();
        for &i in &lapsed {
            self.close_assignment(i, AssignmentResolution::Expired);
            let record = self.assignments[i].record_id;
            let idle = self.engaged_coders(record).is_empty();
            if idle && self.record(record).map(|r| r.status) == Some(RecordStatus::Assigned) {
                self.record_mut(record)
                    .and_then(|r| r.apply(RecordEvent::LeaseExpired))
                    .expect("assigned record can lapse");
            }
        }
        lapsed.len()
    }
}
