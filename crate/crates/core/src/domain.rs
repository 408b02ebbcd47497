//! Shared entities, the record lifecycle state machine and role permissions.

use std::collections::HashSet;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::active_learning::SelectionMethod;
use crate::error::{Error, Result};
use crate::ids::{AnnotationId, CoderId, LabelId, ProjectId, RecordId};
use crate::ingest::UploadRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Coder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coder {
    pub id: CoderId,
    pub username: String,
    pub role: Role,
}

impl Coder {
    pub fn new(username: impl Into<String>, role: Role) -> Self {
        Self {
            id: CoderId::new(),
            username: username.into(),
            role,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Annotate,
    ViewHistory,
    AdminLabel,
    ResolveSkips,
    Discard,
    AdjudicateIrr,
    ViewDashboard,
    Export,
    EditSettings,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::Annotate,
        Action::ViewHistory,
        Action::AdminLabel,
        Action::ResolveSkips,
        Action::Discard,
        Action::AdjudicateIrr,
        Action::ViewDashboard,
        Action::Export,
        Action::EditSettings,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Annotate => "annotate",
            Action::ViewHistory => "view_history",
            Action::AdminLabel => "admin_label",
            Action::ResolveSkips => "resolve_skips",
            Action::Discard => "discard",
            Action::AdjudicateIrr => "adjudicate_irr",
            Action::ViewDashboard => "view_dashboard",
            Action::Export => "export",
            Action::EditSettings => "edit_settings",
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown action {s:?}")))
    }
}

/// Coders may annotate and view their own history; admins may do everything.
pub fn check_permission(role: Role, action: Action) -> bool {
    match role {
        Role::Admin => true,
        Role::Coder => matches!(action, Action::Annotate | Action::ViewHistory),
    }
}

/// String-keyed variant of [`check_permission`]. Unknown actions are denied.
pub fn check_permission_named(role: Role, action: &str) -> bool {
    action
        .parse::<Action>()
        .map(|a| check_permission(role, a))
        .unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectSettings {
    pub batch_size: usize,
    pub al_method: SelectionMethod,
    pub irr_enabled: bool,
    pub irr_overlap_percent: u32,
    pub irr_coder_count: usize,
    pub lease_ttl_seconds: u64,
    pub max_vocabulary: usize,
    pub cv_folds: usize,
}

impl Default for ProjectSettings {
    fn default() -> Self {
        Self {
            batch_size: 30,
            al_method: SelectionMethod::LeastConfident,
            irr_enabled: false,
            irr_overlap_percent: 10,
            irr_coder_count: 2,
            lease_ttl_seconds: 900,
            max_vocabulary: 50_000,
            cv_folds: 5,
        }
    }
}

impl ProjectSettings {
    /// Every violated settings invariant, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.batch_size < 1 {
            errors.push("batch_size must be at least 1".to_string());
        }
        if self.irr_overlap_percent > 100 {
            errors.push("irr_overlap_percent must be between 0 and 100".to_string());
        }
        if self.irr_coder_count < 2 {
            errors.push("irr_coder_count must be at least 2".to_string());
        }
        if self.irr_enabled {
            if self.irr_overlap_percent < 1 {
                errors.push("irr_overlap_percent must be at least 1 when IRR is enabled".into());
            }
            if self.batch_size < self.irr_coder_count {
                errors.push("batch_size must be at least irr_coder_count when IRR is enabled".into());
            }
        }
        if self.lease_ttl_seconds < 1 {
            errors.push("lease_ttl_seconds must be at least 1".to_string());
        }
        if self.max_vocabulary < 1 {
            errors.push("max_vocabulary must be at least 1".to_string());
        }
        if self.cv_folds < 2 {
            errors.push("cv_folds must be at least 2".to_string());
        }
        errors
    }

    /// Number of records at the head of a batch of `batch_len` records that
    /// are served to several coders.
    pub fn double_coded_count(&self, batch_len: usize) -> usize {
        if !self.irr_enabled {
            return 0;
        }
        let wanted = (self.irr_overlap_percent as usize * self.batch_size).div_ceil(100);
        wanted.min(batch_len)
    }
}

/// The subset of settings an admin may change after creation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsPatch {
    pub batch_size: Option<usize>,
    pub al_method: Option<SelectionMethod>,
    pub irr_overlap_percent: Option<u32>,
    pub lease_ttl_seconds: Option<u64>,
}

impl SettingsPatch {
    /// Applies the patch. `batch_size` is frozen once any batch exists.
    pub fn apply(&self, settings: &ProjectSettings, batches_exist: bool) -> Result<ProjectSettings> {
        if self.batch_size.is_some() && batches_exist {
            return Err(Error::Conflict(
                "batch_size is immutable after the first batch".into(),
            ));
        }
        let mut next = settings.clone();
        if let Some(v) = self.batch_size {
            next.batch_size = v;
        }
        if let Some(v) = self.al_method {
            next.al_method = v;
        }
        if let Some(v) = self.irr_overlap_percent {
            next.irr_overlap_percent = v;
        }
        if let Some(v) = self.lease_ttl_seconds {
            next.lease_ttl_seconds = v;
        }
        let errors = next.violations();
        if !errors.is_empty() {
            return Err(Error::InvalidConfig(errors));
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelClass {
    pub id: LabelId,
    pub project_id: ProjectId,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookInfo {
    pub filename: String,
    pub content_type: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: ProjectId,
    pub name: String,
    pub description: String,
    pub settings: ProjectSettings,
    pub labels: Vec<LabelClass>,
    /// Describes the attached codebook; the bytes are stored elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<CodebookInfo>,
    pub created_at: DateTime<Utc>,
}

impl Project {
    pub fn label(&self, id: LabelId) -> Option<&LabelClass> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn label_by_name(&self, name: &str) -> Option<&LabelClass> {
        self.labels.iter().find(|l| l.name == name)
    }

    /// Label ids sorted by name; the class order used by every model.
    pub fn class_order(&self) -> Vec<LabelId> {
        let mut labels: Vec<&LabelClass> = self.labels.iter().collect();
        labels.sort_by(|a, b| a.name.cmp(&b.name));
        labels.into_iter().map(|l| l.id).collect()
    }
}

/// A label declaration supplied at project creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

impl From<&str> for LabelSpec {
    fn from(name: &str) -> Self {
        Self {
            name: name.to_string(),
            description: String::new(),
        }
    }
}

/// Checks every creation invariant and returns the project skeleton, or the
/// complete list of violations.
pub fn validate_project_config(
    name: &str,
    description: &str,
    labels: &[LabelSpec],
    settings: &ProjectSettings,
    rows: &[UploadRow],
    now: DateTime<Utc>,
) -> std::result::Result<Project, Vec<String>> {
    let mut errors = Vec::new();
    if name.trim().is_empty() {
        errors.push("empty project name".to_string());
    }
    if labels.len() < 2 {
        errors.push("fewer than 2 label classes".to_string());
    }
    let mut seen = HashSet::new();
    for label in labels {
        if label.name.is_empty() {
            errors.push("empty label name".to_string());
        } else if !seen.insert(label.name.as_str()) {
            errors.push(format!("duplicate label name {:?}", label.name));
        }
    }
    errors.extend(settings.violations());
    for (i, row) in rows.iter().enumerate() {
        if let Some(pre) = &row.pre_label {
            if !seen.contains(pre.as_str()) {
                errors.push(format!("row {}: unknown pre-label {:?}", i + 1, pre));
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let id = ProjectId::new();
    Ok(Project {
        id,
        name: name.to_string(),
        description: description.to_string(),
        settings: settings.clone(),
        labels: labels
            .iter()
            .map(|l| LabelClass {
                id: LabelId::new(),
                project_id: id,
                name: l.name.clone(),
                description: l.description.clone(),
            })
            .collect(),
        codebook: None,
        created_at: now,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Unlabeled,
    InBatch,
    Assigned,
    Labeled,
    PendingSkipAdjudication,
    PendingIrrAdjudication,
    Discarded,
}

impl RecordStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RecordStatus::Labeled | RecordStatus::Discarded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordEvent {
    SelectIntoBatch,
    Assign,
    Label,
    Skip,
    Discard,
    IrrConflict,
    Adjudicate,
    LeaseExpired,
    /// Admin labels an unlabeled or batched record directly.
    AdminLabel,
}

impl RecordEvent {
    pub const ALL: [RecordEvent; 9] = [
        RecordEvent::SelectIntoBatch,
        RecordEvent::Assign,
        RecordEvent::Label,
        RecordEvent::Skip,
        RecordEvent::Discard,
        RecordEvent::IrrConflict,
        RecordEvent::Adjudicate,
        RecordEvent::LeaseExpired,
        RecordEvent::AdminLabel,
    ];
}

/// The record lifecycle. `Labeled` is final for workflow purposes and
/// `Discarded` is terminal; anything not listed is rejected.
pub fn transition_record_status(from: RecordStatus, event: RecordEvent) -> Result<RecordStatus> {
    use RecordEvent as E;
    use RecordStatus as S;
    let to = match (from, event) {
        (S::Unlabeled, E::SelectIntoBatch) => S::InBatch,
        // a double-coded record stays assigned while further coders join
        (S::InBatch | S::Assigned, E::Assign) => S::Assigned,
        (S::Assigned, E::Label) => S::Labeled,
        (S::Assigned, E::Skip) => S::PendingSkipAdjudication,
        (S::Assigned, E::IrrConflict) => S::PendingIrrAdjudication,
        (S::Assigned, E::LeaseExpired) => S::InBatch,
        (S::PendingSkipAdjudication | S::PendingIrrAdjudication, E::Adjudicate) => S::Labeled,
        (S::Unlabeled | S::InBatch, E::AdminLabel) => S::Labeled,
        (s, E::Discard) if s != S::Discarded && s != S::Labeled => S::Discarded,
        _ => return Err(Error::IllegalTransition { from, event }),
    };
    Ok(to)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: RecordId,
    pub project_id: ProjectId,
    pub external_id: Option<String>,
    pub text: String,
    pub status: RecordStatus,
    pub upload_order: usize,
    /// The label the record carries once `status` is `Labeled`.
    pub final_label: Option<LabelId>,
}

impl Record {
    pub fn apply(&mut self, event: RecordEvent) -> Result<RecordStatus> {
        self.status = transition_record_status(self.status, event)?;
        Ok(self.status)
    }

    /// The ID column value used in exports.
    pub fn export_id(&self) -> String {
        self.external_id
            .clone()
            .unwrap_or_else(|| self.id.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Coder,
    AdminAdjudication,
    PreLabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: AnnotationId,
    pub record_id: RecordId,
    pub coder_id: CoderId,
    pub label_id: LabelId,
    pub elapsed_ms: u64,
    pub source: AnnotationSource,
    pub created_at: DateTime<Utc>,
    pub superseded: bool,
    /// Arrival order within the project.
    pub sequence: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(labels: &[Option<&str>]) -> Vec<UploadRow> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| UploadRow {
                external_id: None,
                text: format!("text {i}"),
                pre_label: l.map(str::to_string),
                upload_order: i,
            })
            .collect()
    }

    fn specs(names: &[&str]) -> Vec<LabelSpec> {
        names.iter().map(|n| LabelSpec::from(*n)).collect()
    }

    #[test]
    fn valid_config() {
        let project = validate_project_config(
            "p",
            "",
            &specs(&["pos", "neg"]),
            &ProjectSettings::default(),
            &rows(&[None; 10]),
            Utc::now(),
        )
        .unwrap();
        assert_eq!(project.labels.len(), 2);
        assert!(project.labels.iter().all(|l| l.project_id == project.id));
    }

    #[test]
    fn config_errors_are_enumerated() {
        let errs = validate_project_config(
            "p",
            "",
            &specs(&["pos"]),
            &ProjectSettings::default(),
            &[],
            Utc::now(),
        )
        .unwrap_err();
        assert_eq!(errs, vec!["fewer than 2 label classes"]);

        let errs = validate_project_config(
            "p",
            "",
            &specs(&["pos", "neg"]),
            &ProjectSettings::default(),
            &rows(&[Some("maybe")]),
            Utc::now(),
        )
        .unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("unknown pre-label"));

        let settings = ProjectSettings {
            batch_size: 0,
            ..Default::default()
        };
        let errs = validate_project_config(
            " ",
            "",
            &specs(&["a", "a"]),
            &settings,
            &[],
            Utc::now(),
        )
        .unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn irr_settings_invariants() {
        let s = ProjectSettings {
            irr_enabled: true,
            irr_overlap_percent: 0,
            batch_size: 1,
            ..Default::default()
        };
        assert_eq!(s.violations().len(), 2);
        let s = ProjectSettings {
            irr_enabled: true,
            batch_size: 10,
            ..Default::default()
        };
        assert_eq!(s.double_coded_count(10), 1);
        assert_eq!(s.double_coded_count(0), 0);
        let s = ProjectSettings {
            irr_enabled: true,
            irr_overlap_percent: 25,
            batch_size: 10,
            ..Default::default()
        };
        assert_eq!(s.double_coded_count(10), 3);
    }

    #[test]
    fn settings_patch_freezes_batch_size() {
        let base = ProjectSettings::default();
        let patch = SettingsPatch {
            batch_size: Some(5),
            ..Default::default()
        };
        assert_eq!(patch.apply(&base, false).unwrap().batch_size, 5);
        assert!(matches!(patch.apply(&base, true), Err(Error::Conflict(_))));
        let patch = SettingsPatch {
            lease_ttl_seconds: Some(0),
            ..Default::default()
        };
        assert!(matches!(patch.apply(&base, true), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn state_machine_examples() {
        use RecordEvent as E;
        use RecordStatus as S;
        assert_eq!(transition_record_status(S::Assigned, E::Label), Ok(S::Labeled));
        assert_eq!(
            transition_record_status(S::Assigned, E::Skip),
            Ok(S::PendingSkipAdjudication)
        );
        assert_eq!(
            transition_record_status(S::Discarded, E::Assign),
            Err(Error::IllegalTransition {
                from: S::Discarded,
                event: E::Assign
            })
        );
        assert_eq!(transition_record_status(S::Assigned, E::LeaseExpired), Ok(S::InBatch));
        assert_eq!(
            transition_record_status(S::PendingIrrAdjudication, E::Discard),
            Ok(S::Discarded)
        );
        assert!(transition_record_status(S::Discarded, E::Label).is_err());
    }

    #[test]
    fn record_apply_leaves_state_on_error() {
        let mut r = Record {
            id: RecordId::new(),
            project_id: ProjectId::new(),
            external_id: None,
            text: "x".into(),
            status: RecordStatus::Discarded,
            upload_order: 0,
            final_label: None,
        };
        assert!(r.apply(RecordEvent::Label).is_err());
        assert_eq!(r.status, RecordStatus::Discarded);
        assert_eq!(r.export_id(), r.id.to_string());
    }

    #[test]
    fn permission_examples() {
        assert!(!check_permission(Role::Coder, Action::Discard));
        assert!(check_permission(Role::Admin, Action::AdjudicateIrr));
        assert!(check_permission(Role::Coder, Action::Annotate));
        assert!(!check_permission_named(Role::Admin, "launch_missiles"));
        assert!(check_permission_named(Role::Coder, "view_history"));
    }

    #[test]
    fn permissions_are_monotone() {
        for action in Action::ALL {
            if check_permission(Role::Coder, action) {
                assert!(check_permission(Role::Admin, action));
            }
        }
    }

    const STATUSES: [RecordStatus; 7] = [
        RecordStatus::Unlabeled,
        RecordStatus::InBatch,
        RecordStatus::Assigned,
        RecordStatus::Labeled,
        RecordStatus::PendingSkipAdjudication,
        RecordStatus::PendingIrrAdjudication,
        RecordStatus::Discarded,
    ];

    proptest! {
        #[test]
        fn discarded_is_terminal(start in 0usize..7, events in prop::collection::vec(0usize..9, 0..40)) {
            let mut status = STATUSES[start];
            let mut seen_discarded = false;
            for e in events {
                match transition_record_status(status, RecordEvent::ALL[e]) {
                    Ok(next) => {
                        prop_assert!(!seen_discarded, "left discarded via {:?}", RecordEvent::ALL[e]);
                        status = next;
                    }
                    Err(Error::IllegalTransition { from, .. }) => prop_assert_eq!(from, status),
                    Err(other) => prop_assert!(false, "unexpected error {other:?}"),
                }
                seen_discarded |= status == RecordStatus::Discarded;
            }
        }
    }
}
