//! Uncertainty sampling and the retrain/evaluate/select cycle.
//!
//! All three uncertainty measures are oriented so that a larger score means a
//! more uncertain prediction. Margin is reported as `1 - (p1 - p2)`.
//!
//! A cycle is split in three so the expensive part can run without holding
//! the project lock: [`prepare_cycle`] copies what training needs out of the
//! project, [`compute_cycle`] trains, evaluates and ranks, and
//! [`commit_cycle`] applies the result atomically.

use std::cmp::Ordering;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, LinearModel, ModelSnapshot, ProbabilityVector, DEFAULT_L2_LAMBDA};
use crate::coordinator::ProjectState;
use crate::error::{Error, Result};
use crate::ids::{BatchId, LabelId, ProjectId, RecordId};
use crate::vectorizer::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    LeastConfident,
    Margin,
    Entropy,
}

impl UncertaintyMethod {
    pub fn score(self, p: &ProbabilityVector) -> Result<f64> {
        match self {
            UncertaintyMethod::LeastConfident => Ok(score_least_confident(p)),
            UncertaintyMethod::Margin => score_margin(p),
            UncertaintyMethod::Entropy => Ok(score_entropy(p)),
        }
    }
}

/// How a batch was (or will be) chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Random,
    LeastConfident,
    Margin,
    Entropy,
}

impl SelectionMethod {
    pub fn uncertainty(self) -> Option<UncertaintyMethod> {
        match self {
            SelectionMethod::Random => None,
            SelectionMethod::LeastConfident => Some(UncertaintyMethod::LeastConfident),
            SelectionMethod::Margin => Some(UncertaintyMethod::Margin),
            SelectionMethod::Entropy => Some(UncertaintyMethod::Entropy),
        }
    }
}

impl From<UncertaintyMethod> for SelectionMethod {
    fn from(m: UncertaintyMethod) -> Self {
        match m {
            UncertaintyMethod::LeastConfident => SelectionMethod::LeastConfident,
            UncertaintyMethod::Margin => SelectionMethod::Margin,
            UncertaintyMethod::Entropy => SelectionMethod::Entropy,
        }
    }
}

pub fn score_least_confident(p: &ProbabilityVector) -> f64 {
    1.0 - p.as_slice().iter().copied().fold(0.0, f64::max)
}

pub fn score_margin(p: &ProbabilityVector) -> Result<f64> {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    if p.len() < 2 {
        return Err(Error::InvalidInput("margin needs at least 2 classes".into()));
    }
    for &v in p.as_slice() {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    Ok(1.0 - (first - second))
}

pub fn score_entropy(p: &ProbabilityVector) -> f64 {
    -p.as_slice()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// A record competing for a batch slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRecord {
    pub record_id: RecordId,
    pub upload_order: usize,
    pub score: f64,
}

/// Orders candidates by descending score, then ascending upload order.
pub fn rank_by_score(mut candidates: Vec<ScoredRecord>) -> Vec<ScoredRecord> {
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.upload_order.cmp(&b.upload_order))
    });
    candidates
}

/// Seed for random selection: a fixed mix of the project id and batch index.
pub fn selection_seed(project_id: ProjectId, batch_index: usize) -> u64 {
    let bytes = project_id.as_bytes();
    let hi = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let lo = u64::from_le_bytes(bytes[8..].try_into().expect("8 bytes"));
    (hi ^ lo.rotate_left(29)).wrapping_add((batch_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Random permutation of `records` (given in upload order).
pub fn random_ranking(records: &[RecordId], seed: u64) -> Vec<RecordId> {
    let mut ranking = records.to_vec();
    ranking.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ranking
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub id: BatchId,
    pub project_id: ProjectId,
    pub index: usize,
    /// In selection order.
    pub record_ids: Vec<RecordId>,
    pub selection_method: SelectionMethod,
    pub status: BatchStatus,
    /// How many records at the head of `record_ids` are double-coded.
    pub double_coded: usize,
    /// Set once the retrain cycle following completion has committed.
    pub cycled: bool,
}

/// Everything a cycle needs, copied out of the project.
#[derive(Debug, Clone)]
pub struct CycleInput {
    pub project_id: ProjectId,
    /// Index of the batch that just completed, if any.
    pub completed_batch: Option<usize>,
    pub next_batch_index: usize,
    pub method: SelectionMethod,
    pub batch_size: usize,
    pub cv_folds: usize,
    pub classes: Vec<LabelId>,
    pub vocabulary: Arc<Vocabulary>,
    pub labeled: Vec<(String, LabelId)>,
    /// Unlabeled records in upload order.
    pub candidates: Vec<(RecordId, usize, String)>,
}

#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub completed_batch: Option<usize>,
    pub next_batch_index: usize,
    pub snapshot: Option<ModelSnapshot>,
    pub selection_method: SelectionMethod,
    /// All candidates, most preferred first.
    pub ranking: Vec<RecordId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    pub snapshot_batch_index: Option<usize>,
    pub next_batch: Option<BatchId>,
    pub selection_method: SelectionMethod,
}

pub fn prepare_cycle(state: &ProjectState) -> Result<CycleInput> {
    let completed_batch = match state.batches().last() {
        None => None,
        Some(b) if b.status == BatchStatus::Open => return Err(Error::BatchIncomplete),
        Some(b) if b.cycled => {
            return Err(Error::Conflict(format!("cycle for batch {} already ran", b.index)))
        }
        Some(b) => Some(b.index),
    };
    let settings = &state.project.settings;
    Ok(CycleInput {
        project_id: state.project.id,
        completed_batch,
        next_batch_index: state.batches().len(),
        method: settings.al_method,
        batch_size: settings.batch_size,
        cv_folds: settings.cv_folds,
        classes: state.project.class_order(),
        vocabulary: state.vocabulary(),
        labeled: state
            .labeled_records()
            .map(|(r, l)| (r.text.clone(), l))
            .collect(),
        candidates: state
            .unlabeled_records()
            .map(|r| (r.id, r.upload_order, r.text.clone()))
            .collect(),
    })
}

/// Trains on the labeled set (when active learning is on), evaluates, and
/// ranks every unlabeled candidate. Pure apart from reading `now`.
pub fn compute_cycle(input: &CycleInput, now: DateTime<Utc>) -> Result<CycleOutcome> {
    let mut model: Option<LinearModel> = None;
    let mut snapshot = None;
    if input.method.uncertainty().is_some() && !input.labeled.is_empty() {
        let xs: Vec<_> = input
            .labeled
            .iter()
            .map(|(text, _)| input.vocabulary.transform(text))
            .collect();
        let ys: Vec<usize> = input
            .labeled
            .iter()
            .map(|(_, label)| {
                input
                    .classes
                    .iter()
                    .position(|c| c == label)
                    .ok_or(Error::NotFound("label"))
            })
            .collect::<Result<_>>()?;
        match classifier::train(&xs, &ys, input.classes.clone(), DEFAULT_L2_LAMBDA) {
            Ok(trained) => {
                if let Some(batch_index) = input.completed_batch {
                    let seed = selection_seed(input.project_id, batch_index) ^ 0xC0FF_EE;
                    let metrics = classifier::cross_validate(
                        &xs,
                        &ys,
                        &input.classes,
                        input.cv_folds,
                        seed,
                        DEFAULT_L2_LAMBDA,
                    )?;
                    snapshot = Some(ModelSnapshot {
                        batch_index,
                        metrics,
                        labeled_count: xs.len(),
                        model: trained.clone(),
                        trained_at: now,
                    });
                }
                model = Some(trained);
            }
            Err(Error::DegenerateTrainingSet) => {}
            Err(e) => return Err(e),
        }
    }

    let (selection_method, ranking) = match (&model, input.method.uncertainty()) {
        (Some(model), Some(measure)) => {
            let scored = input
                .candidates
                .iter()
                .map(|(id, order, text)| {
                    let p = classifier::predict_proba(model, &input.vocabulary.transform(text))?;
                    Ok(ScoredRecord {
                        record_id: *id,
                        upload_order: *order,
                        score: measure.score(&p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let ranking = rank_by_score(scored).into_iter().map(|s| s.record_id).collect();
            (input.method, ranking)
        }
        _ => {
            let ids: Vec<RecordId> = input.candidates.iter().map(|(id, _, _)| *id).collect();
            let seed = selection_seed(input.project_id, input.next_batch_index);
            (SelectionMethod::Random, random_ranking(&ids, seed))
        }
    };
    Ok(CycleOutcome {
        completed_batch: input.completed_batch,
        next_batch_index: input.next_batch_index,
        snapshot,
        selection_method,
        ranking,
    })
}

/// Applies a computed cycle. Records that left the unlabeled pool while the
/// cycle was computing are skipped over in the ranking.
pub fn commit_cycle(state: &mut ProjectState, outcome: CycleOutcome) -> Result<CycleSummary> {
    let current_last = state.batches().last().map(|b| b.index);
    if current_last != outcome.completed_batch || state.batches().len() != outcome.next_batch_index
    {
        return Err(Error::Conflict("project changed while the cycle ran".into()));
    }
    if let Some(last) = state.batches().last() {
        if last.status == BatchStatus::Open || last.cycled {
            return Err(Error::Conflict("no completed batch awaiting a cycle".into()));
        }
    }
    let snapshot_batch_index = outcome.snapshot.as_ref().map(|s| s.batch_index);
    if let Some(snapshot) = outcome.snapshot {
        state.push_snapshot(snapshot);
    }
    state.mark_last_batch_cycled();
    let batch_size = state.project.settings.batch_size;
    let next_batch =
        state.open_batch_from_ranking(&outcome.ranking, outcome.selection_method, batch_size)?;
    Ok(CycleSummary {
        snapshot_batch_index,
        next_batch,
        selection_method: outcome.selection_method,
    })
}

/// Prepare, compute and commit in one call.
pub fn run_cycle(state: &mut ProjectState, now: DateTime<Utc>) -> Result<CycleSummary> {
    let input = prepare_cycle(state)?;
    let outcome = compute_cycle(&input, now)?;
    commit_cycle(state, outcome)
}

/// Chooses and opens the next batch without a prior completed batch check;
/// used by tests and tools that drive selection directly.
pub fn select_batch(
    state: &mut ProjectState,
    model: Option<&LinearModel>,
    method: SelectionMethod,
    batch_size: usize,
) -> Result<BatchId> {
    if state.batches().last().is_some_and(|b| b.status == BatchStatus::Open) {
        return Err(Error::Conflict("a batch is already open".into()));
    }
    let candidates: Vec<(RecordId, usize, String)> = state
        .unlabeled_records()
        .map(|r| (r.id, r.upload_order, r.text.clone()))
        .collect();
    if candidates.is_empty() {
        return Err(Error::CorpusExhausted);
    }
    let vocabulary = state.vocabulary();
    let (used, ranking) = match (model, method.uncertainty()) {
        (Some(model), Some(measure)) => {
            let scored = candidates
                .iter()
                .map(|(id, order, text)| {
                    let p = classifier::predict_proba(model, &vocabulary.transform(text))?;
                    Ok(ScoredRecord {
                        record_id: *id,
                        upload_order: *order,
                        score: measure.score(&p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (method, rank_by_score(scored).into_iter().map(|s| s.record_id).collect())
        }
        _ => {
            let ids: Vec<RecordId> = candidates.iter().map(|(id, _, _)| *id).collect();
            let seed = selection_seed(state.project.id, state.batches().len());
            (SelectionMethod::Random, random_ranking(&ids, seed))
        }
    };
    state
        .open_batch_from_ranking(&ranking, used, batch_size)?
        .ok_or(Error::CorpusExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn measures_on_worked_example() {
        let v = p(&[0.5, 0.3, 0.2]);
        assert_abs_diff_eq!(score_least_confident(&v), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(score_margin(&v).unwrap(), 0.8, epsilon = 1e-12);
        let by_hand = -(0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
        assert_abs_diff_eq!(score_entropy(&v), by_hand, epsilon = 1e-12);
        assert_abs_diff_eq!(score_entropy(&v), 1.02965, epsilon = 1e-4);
    }

    #[test]
    fn measures_at_extremes() {
        let one_hot = p(&[1.0, 0.0, 0.0]);
        assert_eq!(score_least_confident(&one_hot), 0.0);
        assert_eq!(score_margin(&one_hot).unwrap(), 0.0);
        assert_eq!(score_entropy(&one_hot), 0.0);
        let uniform = ProbabilityVector::uniform(3);
        assert_abs_diff_eq!(score_least_confident(&uniform), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(score_margin(&uniform).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(score_entropy(&uniform), 3f64.ln(), epsilon = 1e-15);
        assert!(score_margin(&p(&[1.0])).is_err());
    }

    #[test]
    fn ranking_examples() {
        let ids: Vec<RecordId> = (0..3).map(|_| RecordId::new()).collect();
        let ranked = rank_by_score(vec![
            ScoredRecord { record_id: ids[0], upload_order: 0, score: 0.9 },
            ScoredRecord { record_id: ids[1], upload_order: 1, score: 0.1 },
            ScoredRecord { record_id: ids[2], upload_order: 2, score: 0.5 },
        ]);
        assert_eq!(ranked[0].record_id, ids[0]);
        assert_eq!(ranked[1].record_id, ids[2]);

        let tied = rank_by_score(vec![
            ScoredRecord { record_id: ids[2], upload_order: 7, score: 0.3 },
            ScoredRecord { record_id: ids[0], upload_order: 2, score: 0.3 },
            ScoredRecord { record_id: ids[1], upload_order: 5, score: 0.3 },
        ]);
        let top: Vec<usize> = tied.iter().take(2).map(|s| s.upload_order).collect();
        assert_eq!(top, vec![2, 5]);
    }

    #[test]
    fn random_ranking_is_reproducible() {
        let ids: Vec<RecordId> = (0..20).map(|_| RecordId::new()).collect();
        let project = ProjectId::new();
        let a = random_ranking(&ids, selection_seed(project, 0));
        let b = random_ranking(&ids, selection_seed(project, 0));
        let c = random_ranking(&ids, selection_seed(project, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn simplex(k: usize) -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |raw| {
            let sum: f64 = raw.iter().sum();
            (sum > 1e-6).then(|| ProbabilityVector(raw.iter().map(|v| v / sum).collect()))
        })
    }

    proptest! {
        #[test]
        fn measures_within_ranges(v in simplex(4)) {
            let k = 4.0f64;
            let lc = score_least_confident(&v);
            prop_assert!((0.0..=1.0 - 1.0 / k + 1e-12).contains(&lc));
            let m = score_margin(&v).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
            let h = score_entropy(&v);
            prop_assert!(h >= -1e-12 && h <= k.ln() + 1e-12);
        }

        #[test]
        fn monotone_transform_keeps_selected_set(
            scores in prop::collection::vec(0.0f64..1.0, 1..40),
            take in 1usize..10,
        ) {
            let ids: Vec<RecordId> = scores.iter().map(|_| RecordId::new()).collect();
            let build = |f: &dyn Fn(f64) -> f64| {
                let scored = ids.iter().zip(&scores).enumerate().map(|(i, (id, s))| ScoredRecord {
                    record_id: *id, upload_order: i, score: f(*s),
                }).collect();
                let mut top: Vec<RecordId> =
                    rank_by_score(scored).into_iter().take(take).map(|s| s.record_id).collect();
                top.sort();
                top
            };
            prop_assert_eq!(build(&|s| s), build(&|s| (3.0 * s).exp() + 2.0));
        }
    }
}
