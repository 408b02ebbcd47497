//! Per-project workflow state.
//!
//! [`ProjectState`] owns every record, annotation, assignment, batch and
//! model snapshot of one project. All mutation goes through its methods, which
//! the service serializes behind one lock per project. Each mutation marks the
//! entities it touched in a [`ChangeSet`] so the persistence layer can write
//! exactly those in one transaction.

mod admin;
mod assign;
mod dashboard;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use admin::Decision;
pub use assign::{Assignment, AssignmentResolution, ServedAssignment, SubmitOutcome};
pub use dashboard::Disagreement;

use crate::active_learning::{Batch, BatchStatus, SelectionMethod};
use crate::classifier::ModelSnapshot;
use crate::domain::{
    check_permission, Action, Annotation, AnnotationSource, Coder, CodebookInfo, Project, Record, RecordStatus,
    Role, SettingsPatch,
};
use crate::error::{Error, Result};
use crate::ids::{AnnotationId, AssignmentId, BatchId, CoderId, LabelId, RecordId};
use crate::ingest::UploadRow;
use crate::vectorizer::Vocabulary;

/// Entities modified since the last [`ProjectState::take_changes`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChangeSet {
    pub project: bool,
    pub vocabulary: bool,
    pub members: bool,
    pub records: BTreeSet<RecordId>,
    pub annotations: BTreeSet<AnnotationId>,
    pub assignments: BTreeSet<AssignmentId>,
    pub batches: BTreeSet<usize>,
    pub snapshots: BTreeSet<usize>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        *self == ChangeSet::default()
    }
}

/// Owned, serializable form of a whole project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectParts {
    pub project: Project,
    pub records: Vec<Record>,
    pub annotations: Vec<Annotation>,
    pub assignments: Vec<Assignment>,
    pub batches: Vec<Batch>,
    pub snapshots: Vec<ModelSnapshot>,
    pub vocabulary: Vocabulary,
    pub members: Vec<Coder>,
}

#[derive(Debug, Clone)]
pub struct ProjectState {
    pub project: Project,
    records: Vec<Record>,
    record_index: HashMap<RecordId, usize>,
    annotations: Vec<Annotation>,
    annotation_index: HashMap<AnnotationId, usize>,
    annotations_by_record: HashMap<RecordId, Vec<usize>>,
    assignments: Vec<Assignment>,
    assignment_index: HashMap<AssignmentId, usize>,
    assignments_by_record: HashMap<RecordId, Vec<usize>>,
    pending: BTreeSet<usize>,
    batches: Vec<Batch>,
    batch_of: HashMap<RecordId, usize>,
    snapshots: Vec<ModelSnapshot>,
    vocabulary: Arc<Vocabulary>,
    members: BTreeMap<CoderId, Coder>,
    changes: ChangeSet,
}

impl ProjectState {
    /// Builds a new project from validated upload rows. The vocabulary is
    /// fitted over every record; pre-labeled rows start out labeled and are
    /// attributed to `creator`.
    pub fn create(
        project: Project,
        rows: &[UploadRow],
        creator: &Coder,
        now: DateTime<Utc>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("no records uploaded".into()));
        }
        let texts: Vec<&str> = rows.iter().map(|r| r.text.as_str()).collect();
        let vocabulary = Vocabulary::fit(&texts, project.settings.max_vocabulary)?;

        let mut records = Vec::with_capacity(rows.len());
        let mut annotations = Vec::new();
        for (order, row) in rows.iter().enumerate() {
            let pre_label = match &row.pre_label {
                Some(name) => Some(
                    project
                        .label_by_name(name)
                        .ok_or_else(|| Error::InvalidInput(format!("unknown pre-label {name:?}")))?
                        .id,
                ),
                None => None,
            };
            let record = Record {
                id: RecordId::new(),
                project_id: project.id,
                external_id: row.external_id.clone(),
                text: row.text.clone(),
                status: if pre_label.is_some() {
                    RecordStatus::Labeled
                } else {
                    RecordStatus::Unlabeled
                },
                upload_order: order,
                final_label: pre_label,
            };
            if let Some(label) = pre_label {
                annotations.push(Annotation {
                    id: AnnotationId::new(),
                    record_id: record.id,
                    coder_id: creator.id,
                    label_id: label,
                    elapsed_ms: 0,
                    source: AnnotationSource::PreLabeled,
                    created_at: now,
                    superseded: false,
                    sequence: annotations.len(),
                });
            }
            records.push(record);
        }
        let parts = ProjectParts {
            project,
            records,
            annotations,
            assignments: Vec::new(),
            batches: Vec::new(),
            snapshots: Vec::new(),
            vocabulary,
            members: vec![creator.clone()],
        };
        let mut state = Self::from_parts(parts)?;
        state.mark_all_changed();
        Ok(state)
    }

    pub fn from_parts(parts: ProjectParts) -> Result<Self> {
        let mut records = parts.records;
        records.sort_by_key(|r| r.upload_order);
        let record_index = records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let mut vocabulary = parts.vocabulary;
        vocabulary.reindex();
        let mut state = Self {
            project: parts.project,
            records,
            record_index,
            annotations: Vec::new(),
            annotation_index: HashMap::new(),
            annotations_by_record: HashMap::new(),
            assignments: Vec::new(),
            assignment_index: HashMap::new(),
            assignments_by_record: HashMap::new(),
            pending: BTreeSet::new(),
            batches: Vec::new(),
            batch_of: HashMap::new(),
            snapshots: parts.snapshots,
            vocabulary: Arc::new(vocabulary),
            members: parts.members.into_iter().map(|c| (c.id, c)).collect(),
            changes: ChangeSet::default(),
        };
        let mut annotations = parts.annotations;
        annotations.sort_by_key(|a| a.sequence);
        for a in annotations {
            state.insert_annotation(a);
        }
        let mut assignments = parts.assignments;
        assignments.sort_by_key(|a| a.sequence);
        for a in assignments {
            state.insert_assignment(a);
        }
        let mut batches = parts.batches;
        batches.sort_by_key(|b| b.index);
        for b in batches {
            state.insert_batch(b);
        }
        state.snapshots.sort_by_key(|s| s.batch_index);
        state.changes = ChangeSet::default();
        Ok(state)
    }

    pub fn to_parts(&self) -> ProjectParts {
        ProjectParts {
            project: self.project.clone(),
            records: self.records.clone(),
            annotations: self.annotations.clone(),
            assignments: self.assignments.clone(),
            batches: self.batches.clone(),
            snapshots: self.snapshots.clone(),
            vocabulary: (*self.vocabulary).clone(),
            members: self.members.values().cloned().collect(),
        }
    }

    fn mark_all_changed(&mut self) {
        self.changes = ChangeSet {
            project: true,
            vocabulary: true,
            members: true,
            records: self.record_index.keys().copied().collect(),
            annotations: self.annotation_index.keys().copied().collect(),
            assignments: self.assignment_index.keys().copied().collect(),
            batches: (0..self.batches.len()).collect(),
            snapshots: (0..self.snapshots.len()).collect(),
        };
    }

    pub fn take_changes(&mut self) -> ChangeSet {
        std::mem::take(&mut self.changes)
    }

    pub fn vocabulary(&self) -> Arc<Vocabulary> {
        Arc::clone(&self.vocabulary)
    }

    // ---- read access -------------------------------------------------------

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, id: RecordId) -> Option<&Record> {
        self.record_index.get(&id).map(|i| &self.records[*i])
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn annotation(&self, id: AnnotationId) -> Option<&Annotation> {
        self.annotation_index.get(&id).map(|i| &self.annotations[*i])
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn assignment(&self, id: AssignmentId) -> Option<&Assignment> {
        self.assignment_index.get(&id).map(|i| &self.assignments[*i])
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn batch_by_id(&self, id: BatchId) -> Option<&Batch> {
        self.batches.iter().find(|b| b.id == id)
    }

    pub fn open_batch(&self) -> Option<&Batch> {
        self.batches.last().filter(|b| b.status == BatchStatus::Open)
    }

    pub fn snapshots(&self) -> &[ModelSnapshot] {
        &self.snapshots
    }

    pub fn members(&self) -> impl Iterator<Item = &Coder> {
        self.members.values()
    }

    pub fn member(&self, id: CoderId) -> Option<&Coder> {
        self.members.get(&id)
    }

    pub fn is_member(&self, id: CoderId) -> bool {
        self.members.contains_key(&id)
    }

    /// Labeled records with their final label, in upload order.
    pub fn labeled_records(&self) -> impl Iterator<Item = (&Record, LabelId)> {
        self.records.iter().filter_map(|r| match (r.status, r.final_label) {
            (RecordStatus::Labeled, Some(label)) => Some((r, label)),
            _ => None,
        })
    }

    /// Records never selected into a batch and not yet labeled.
    pub fn unlabeled_records(&self) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(|r| r.status == RecordStatus::Unlabeled)
    }

    /// Annotations on `record`, oldest first.
    pub fn record_annotations(&self, record: RecordId) -> impl Iterator<Item = &Annotation> {
        self.annotations_by_record
            .get(&record)
            .into_iter()
            .flatten()
            .map(|i| &self.annotations[*i])
    }

    /// Whether a retrain/select cycle is due: the latest batch completed and
    /// has not been cycled, or no batch exists yet and records await labeling.
    pub fn needs_cycle(&self) -> bool {
        match self.batches.last() {
            None => self.unlabeled_records().next().is_some(),
            Some(b) => b.status == BatchStatus::Complete && !b.cycled,
        }
    }

    pub fn batch_index_of(&self, record: RecordId) -> Option<usize> {
        self.batch_of.get(&record).copied()
    }

    pub fn is_double_coded(&self, record: RecordId) -> bool {
        let Some(&b) = self.batch_of.get(&record) else {
            return false;
        };
        let batch = &self.batches[b];
        batch
            .record_ids
            .iter()
            .take(batch.double_coded)
            .any(|r| *r == record)
    }

    /// How many distinct coders a record must collect.
    pub fn coder_capacity(&self, record: RecordId) -> usize {
        if self.is_double_coded(record) {
            self.project.settings.irr_coder_count
        } else {
            1
        }
    }

    // ---- membership and authorization --------------------------------------

    pub fn add_member(&mut self, coder: Coder) {
        if self.members.insert(coder.id, coder.clone()).as_ref() != Some(&coder) {
            self.changes.members = true;
        }
    }

    /// Role check plus project scoping: coders must be members, admins may
    /// act on every project.
    pub fn authorize(&self, actor: &Coder, action: Action) -> Result<()> {
        if !check_permission(actor.role, action) {
            return Err(Error::PermissionDenied);
        }
        if actor.role != Role::Admin && !self.is_member(actor.id) {
            return Err(Error::PermissionDenied);
        }
        Ok(())
    }

    pub fn update_settings(&mut self, actor: &Coder, patch: &SettingsPatch) -> Result<()> {
        self.authorize(actor, Action::EditSettings)?;
        self.project.settings = patch.apply(&self.project.settings, !self.batches.is_empty())?;
        self.changes.project = true;
        Ok(())
    }

    pub fn set_codebook(&mut self, info: Option<CodebookInfo>) {
        self.project.codebook = info;
        self.changes.project = true;
    }

    // ---- internal mutation helpers -----------------------------------------

    fn record_mut(&mut self, id: RecordId) -> Result<&mut Record> {
        let i = *self.record_index.get(&id).ok_or(Error::NotFound("record"))?;
        self.changes.records.insert(id);
        Ok(&mut self.records[i])
    }

    fn insert_annotation(&mut self, a: Annotation) {
        let i = self.annotations.len();
        self.annotation_index.insert(a.id, i);
        self.annotations_by_record.entry(a.record_id).or_default().push(i);
        self.changes.annotations.insert(a.id);
        self.annotations.push(a);
    }

    /// Adds an annotation, superseding any live one by the same coder on the
    /// same record.
    fn add_annotation(
        &mut self,
        record: RecordId,
        coder: CoderId,
        label: LabelId,
        elapsed_ms: u64,
        source: AnnotationSource,
        now: DateTime<Utc>,
    ) -> AnnotationId {
        let previous: Vec<usize> = self
            .annotations_by_record
            .get(&record)
            .into_iter()
            .flatten()
            .copied()
            .filter(|i| {
                let a = &self.annotations[*i];
                a.coder_id == coder && !a.superseded
            })
            .collect();
        for i in previous {
            self.annotations[i].superseded = true;
            self.changes.annotations.insert(self.annotations[i].id);
        }
        let id = AnnotationId::new();
        self.insert_annotation(Annotation {
            id,
            record_id: record,
            coder_id: coder,
            label_id: label,
            elapsed_ms,
            source,
            created_at: now,
            superseded: false,
            sequence: self.annotations.len(),
        });
        id
    }

    fn insert_assignment(&mut self, a: Assignment) {
        let i = self.assignments.len();
        self.assignment_index.insert(a.id, i);
        self.assignments_by_record.entry(a.record_id).or_default().push(i);
        if a.resolution == AssignmentResolution::Pending {
            self.pending.insert(i);
        }
        self.changes.assignments.insert(a.id);
        self.assignments.push(a);
    }

    fn insert_batch(&mut self, batch: Batch) {
        let i = self.batches.len();
        for r in &batch.record_ids {
            self.batch_of.insert(*r, i);
        }
        self.changes.batches.insert(i);
        self.batches.push(batch);
    }

    pub(crate) fn push_snapshot(&mut self, snapshot: ModelSnapshot) {
        self.changes.snapshots.insert(self.snapshots.len());
        self.snapshots.push(snapshot);
    }

    pub(crate) fn mark_last_batch_cycled(&mut self) {
        if let Some(last) = self.batches.last_mut() {
            last.cycled = true;
            self.changes.batches.insert(last.index);
        }
    }

    /// Opens a batch from the first `batch_size` entries of `ranking` that are
    /// still unlabeled. Returns `None` when none qualify.
    pub(crate) fn open_batch_from_ranking(
        &mut self,
        ranking: &[RecordId],
        method: SelectionMethod,
        batch_size: usize,
    ) -> Result<Option<BatchId>> {
        let chosen: Vec<RecordId> = ranking
            .iter()
            .copied()
            .filter(|id| self.record(*id).is_some_and(|r| r.status == RecordStatus::Unlabeled))
            .take(batch_size)
            .collect();
        if chosen.is_empty() {
            return Ok(None);
        }
        for id in &chosen {
            self.record_mut(*id)?
                .apply(crate::domain::RecordEvent::SelectIntoBatch)?;
        }
        let id = BatchId::new();
        let double_coded = self.project.settings.double_coded_count(chosen.len());
        self.insert_batch(Batch {
            id,
            project_id: self.project.id,
            index: self.batches.len(),
            record_ids: chosen,
            selection_method: method,
            status: BatchStatus::Open,
            double_coded,
            cycled: false,
        });
        Ok(Some(id))
    }

    /// Marks the record's batch complete once every member is labeled or
    /// discarded. Completed batches never reopen.
    fn check_batch_completion(&mut self, record: RecordId) {
        let Some(&b) = self.batch_of.get(&record) else {
            return;
        };
        let batch = &self.batches[b];
        if batch.status == BatchStatus::Complete {
            return;
        }
        let done = batch
            .record_ids
            .iter()
            .all(|r| self.record(*r).is_some_and(|r| r.status.is_terminal()));
        if done {
            self.batches[b].status = BatchStatus::Complete;
            self.changes.batches.insert(b);
        }
    }

    /// Coders currently engaged with a record: live coder annotations plus
    /// pending assignments.
    fn engaged_coders(&self, record: RecordId) -> BTreeSet<CoderId> {
        let annotated = self
            .record_annotations(record)
            .filter(|a| a.source == AnnotationSource::Coder && !a.superseded)
            .map(|a| a.coder_id);
        let pending = self
            .assignments_by_record
            .get(&record)
            .into_iter()
            .flatten()
            .filter(|i| self.pending.contains(i))
            .map(|i| self.assignments[*i].coder_id);
        annotated.chain(pending).collect()
    }

    fn live_coder_votes(&self, record: RecordId) -> Vec<(CoderId, LabelId)> {
        self.record_annotations(record)
            .filter(|a| a.source == AnnotationSource::Coder && !a.superseded)
            .map(|a| (a.coder_id, a.label_id))
            .collect()
    }
}
