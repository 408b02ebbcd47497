use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use chrono::{DateTime, Utc};
use labelforge_core::irr::KappaStatistic;
use labelforge_core::stats::TimingStats;
use labelforge_core::{Action, CoderId, ProjectState};
use serde::{Deserialize, Serialize};

use super::{parse_id, Actor};
use crate::app::App;
use crate::error::{ApiError, ApiResult};

fn username(s: &ProjectState, id: CoderId) -> String {
    s.member(id).map(|c| c.username.clone()).unwrap_or_else(|| id.to_string())
}

fn label_names(s: &ProjectState) -> Vec<String> {
    s.project
        .class_order()
        .into_iter()
        .filter_map(|id| s.project.label(id).map(|l| l.name.clone()))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoderLabelCounts {
    pub coder_id: CoderId,
    pub username: String,
    /// Label name to count; every project label is present.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub labels: Vec<String>,
    pub coders: Vec<CoderLabelCounts>,
}

pub async fn labels(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<LabelMetrics>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::ViewDashboard)?;
        let names = label_names(s);
        let mut coders: Vec<CoderLabelCounts> = s
            .label_distribution()
            .into_iter()
            .map(|(coder, by_label)| {
                let mut counts: BTreeMap<String, usize> = names.iter().map(|n| (n.clone(), 0)).collect();
                for (label, n) in by_label {
                    if let Some(l) = s.project.label(label) {
                        counts.insert(l.name.clone(), n);
                    }
                }
                CoderLabelCounts {
                    coder_id: coder,
                    username: username(s, coder),
                    counts,
                }
            })
            .collect();
        coders.sort_by(|a, b| a.username.cmp(&b.username));
        Ok(Json(LabelMetrics { labels: names, coders }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoderTiming {
    pub coder_id: CoderId,
    pub username: String,
    pub stats: TimingStats,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimingMetrics {
    pub unit: String,
    pub coders: Vec<CoderTiming>,
}

pub async fn timing(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<TimingMetrics>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::ViewDashboard)?;
        let mut coders: Vec<CoderTiming> = s
            .timing_stats()
            .into_iter()
            .map(|(coder, stats)| CoderTiming {
                coder_id: coder,
                username: username(s, coder),
                stats,
            })
            .collect();
        coders.sort_by(|a, b| a.username.cmp(&b.username));
        Ok(Json(TimingMetrics {
            unit: "ms".into(),
            coders,
        }))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelPoint {
    pub batch_index: usize,
    pub labeled_count: usize,
    pub trained_at: DateTime<Utc>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub enabled: bool,
    pub series: Vec<ModelPoint>,
}

pub async fn model(State(app): State<Arc<App>>, Actor(actor): Actor, Path(id): Path<String>) -> ApiResult<Json<ModelMetrics>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::ViewDashboard)?;
        let series = s
            .snapshots()
            .iter()
            .map(|snap| ModelPoint {
                batch_index: snap.batch_index,
                labeled_count: snap.labeled_count,
                trained_at: snap.trained_at,
                accuracy: snap.metrics.accuracy,
                macro_precision: snap.metrics.macro_precision,
                macro_recall: snap.metrics.macro_recall,
                macro_f1: snap.metrics.macro_f1,
            })
            .collect();
        Ok(Json(ModelMetrics {
            enabled: s.project.settings.al_method.uncertainty().is_some(),
            series,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct PairQuery {
    pub coder_a: Option<String>,
    pub coder_b: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairBody {
    pub coder_a: String,
    pub coder_b: String,
    pub shared_items: usize,
    pub agreement: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixBody {
    /// Row coder and column coder when restricted to one pair.
    pub coders: Option<(String, String)>,
    pub labels: Vec<String>,
    /// `counts[i][j]`: items the row coder labeled `labels[i]` and the
    /// column coder labeled `labels[j]`.
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IrrMetrics {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<KappaStatistic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<Vec<PairBody>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixBody>,
}

/// Kappa, agreement figures and the agreement matrix. `coder_a` and
/// `coder_b` (usernames or ids) restrict the matrix to one pair.
pub async fn irr(
    State(app): State<Arc<App>>,
    Actor(actor): Actor,
    Path(id): Path<String>,
    Query(pair): Query<PairQuery>,
) -> ApiResult<Json<IrrMetrics>> {
    let id = parse_id(&id, "project")?;
    app.read_async(id, move |s| {
        s.authorize(&actor, Action::ViewDashboard)?;
        if !s.project.settings.irr_enabled {
            return Ok(Json(IrrMetrics {
                enabled: false,
                statistic: None,
                kappa: None,
                percent_agreement: None,
                item_count: None,
                pairwise: None,
                matrix: None,
            }));
        }
        let resolve = |key: &str| -> ApiResult<CoderId> {
            s.members()
                .find(|c| c.username == key || c.id.to_string() == key)
                .map(|c| c.id)
                .ok_or_else(|| ApiError::not_found("coder"))
        };
        let chosen = match (&pair.coder_a, &pair.coder_b) {
            (Some(a), Some(b)) => Some((resolve(a)?, resolve(b)?)),
            (None, None) => None,
            _ => return Err(ApiError::bad_request("give both coder_a and coder_b, or neither")),
        };
        let items = s.coded_items();
        let summary = items.summary(s.project.settings.irr_coder_count);
        let (matrix, coders) = match chosen {
            Some((a, b)) => {
                let (row, col) = items.ordered_pair(a, b);
                (items.agreement_matrix(Some((a, b))), Some((username(s, row), username(s, col))))
            }
            None => (summary.matrix.clone(), None),
        };
        Ok(Json(IrrMetrics {
            enabled: true,
            statistic: summary.statistic,
            kappa: summary.kappa,
            percent_agreement: summary.percent_agreement,
            item_count: Some(summary.item_count),
            pairwise: Some(
                summary
                    .pairwise
                    .iter()
                    .map(|p| PairBody {
                        coder_a: username(s, p.coder_a),
                        coder_b: username(s, p.coder_b),
                        shared_items: p.shared_items,
                        agreement: p.agreement,
                    })
                    .collect(),
            ),
            matrix: Some(MatrixBody {
                coders,
                labels: label_names(s),
                counts: matrix.counts,
            }),
        }))
    })
    .await
}
