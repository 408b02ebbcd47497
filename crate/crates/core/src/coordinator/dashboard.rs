//! Read-only projections for the admin dashboard and queues.

use std::collections::BTreeMap;

use serde::Serialize;

use super::ProjectState;
use crate::domain::{AnnotationSource, Record, RecordStatus};
use crate::ids::{CoderId, LabelId};
use crate::irr::{AgreementTable, CodedItems, IrrSummary};
use crate::stats::TimingStats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub record: Record,
    pub votes: Vec<(CoderId, LabelId)>,
}

impl ProjectState {
    /// Per coder, per label counts of live coder labels and adjudications.
    pub fn label_distribution(&self) -> BTreeMap<CoderId, BTreeMap<LabelId, usize>> {
        let mut counts: BTreeMap<CoderId, BTreeMap<LabelId, usize>> = BTreeMap::new();
        for a in self.annotations() {
            if a.superseded || a.source == AnnotationSource::PreLabeled {
                continue;
            }
            *counts
                .entry(a.coder_id)
                .or_default()
                .entry(a.label_id)
                .or_default() += 1;
        }
        counts
    }

    /// Box-plot summary of time-to-label per coder, over live coder labels.
    pub fn timing_stats(&self) -> BTreeMap<CoderId, TimingStats> {
        let mut samples: BTreeMap<CoderId, Vec<f64>> = BTreeMap::new();
        for a in self.annotations() {
            if !a.superseded && a.source == AnnotationSource::Coder {
                samples.entry(a.coder_id).or_default().push(a.elapsed_ms as f64);
            }
        }
        samples
            .into_iter()
            .filter_map(|(coder, s)| TimingStats::from_samples(&s).map(|t| (coder, t)))
            .collect()
    }

    pub fn coded_items(&self) -> CodedItems {
        CodedItems::gather(
            self.annotations(),
            self.members(),
            self.project.class_order(),
            self.project.settings.irr_coder_count,
        )
    }

    pub fn irr_summary(&self) -> IrrSummary {
        self.coded_items()
            .summary(self.project.settings.irr_coder_count)
    }

    pub fn agreement_matrix(&self, pair: Option<(CoderId, CoderId)>) -> AgreementTable {
        self.coded_items().agreement_matrix(pair)
    }

    pub fn skipped_queue(&self) -> Vec<&Record> {
        self.records()
            .iter()
            .filter(|r| r.status == RecordStatus::PendingSkipAdjudication)
            .collect()
    }

    pub fn disagreements(&self) -> Vec<Disagreement> {
        self.records()
            .iter()
            .filter(|r| r.status == RecordStatus::PendingIrrAdjudication)
            .map(|r| Disagreement {
                record: r.clone(),
                votes: self.live_coder_votes(r.id),
            })
            .collect()
    }
}
