//! Inter-rater reliability: Cohen's kappa for two coders, Fleiss' kappa for
//! more, raw percent agreement, and the coder-vs-coder agreement matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{Annotation, AnnotationSource, Coder};
use crate::error::{Error, Result};
use crate::ids::{CoderId, LabelId, RecordId};

/// Square count matrix; rows are the first coder's labels, columns the
/// second coder's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub counts: Vec<Vec<u64>>,
}

impl AgreementTable {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidInput("agreement table must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let k = self.counts.len();
        Self {
            counts: (0..k)
                .map(|i| (0..k).map(|j| self.counts[j][i]).collect())
                .collect(),
        }
    }

    pub fn add(&mut self, other: &AgreementTable) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }

    /// Fraction of items on the diagonal.
    pub fn observed_agreement(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| {
            let diagonal: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
            diagonal as f64 / n as f64
        })
    }
}

pub fn cohens_kappa(table: &AgreementTable) -> Result<f64> {
    let n = table.total();
    if n == 0 {
        return Err(Error::NoDoubleCodedItems);
    }
    let n = n as f64;
    let k = table.counts.len();
    let p_o = table.observed_agreement().expect("nonempty table");
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = table.counts[i].iter().sum();
            let col: u64 = table.counts.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Items × categories matrix of how many coders chose each category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingsMatrix {
    counts: Vec<Vec<u64>>,
    raters: u64,
}

impl RatingsMatrix {
    pub fn new(counts: Vec<Vec<u64>>, raters: u64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::NoDoubleCodedItems);
        }
        if raters < 2 {
            return Err(Error::InvalidInput("need at least 2 ratings per item".into()));
        }
        let k = counts[0].len();
        if counts
            .iter()
            .any(|row| row.len() != k || row.iter().sum::<u64>() != raters)
        {
            return Err(Error::RaggedRatings);
        }
        Ok(Self { counts, raters })
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn raters(&self) -> u64 {
        self.raters
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Mean per-item fraction of agreeing rater pairs.
    fn mean_item_agreement(&self) -> f64 {
        let n = self.raters as f64;
        let total: f64 = self
            .counts
            .iter()
            .map(|row| {
                let squares: f64 = row.iter().map(|&m| (m * m) as f64).sum();
                (squares - n) / (n * (n - 1.0))
            })
            .sum();
        total / self.items() as f64
    }
}

pub fn fleiss_kappa(ratings: &RatingsMatrix) -> f64 {
    let p_bar = ratings.mean_item_agreement();
    let total = (ratings.items() as u64 * ratings.raters) as f64;
    let k = ratings.counts[0].len();
    let p_e: f64 = (0..k)
        .map(|j| {
            let p_j = ratings.counts.iter().map(|r| r[j]).sum::<u64>() as f64 / total;
            p_j * p_j
        })
        .sum();
    if p_e == 1.0 {
        return 1.0;
    }
    (p_bar - p_e) / (1.0 - p_e)
}

pub fn percent_agreement_overall(ratings: &RatingsMatrix) -> f64 {
    ratings.mean_item_agreement()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaStatistic {
    Cohen,
    Fleiss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub coder_a: CoderId,
    pub coder_b: CoderId,
    pub shared_items: usize,
    pub agreement: f64,
}

/// Inputs for IRR: per record, the coder votes used for reliability.
///
/// Only non-superseded coder annotations count (adjudications and
/// pre-labels are excluded). Records with more than `max_coders` votes keep
/// the earliest ones; records with fewer than two are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedItems {
    pub classes: Vec<LabelId>,
    pub items: BTreeMap<RecordId, Vec<(CoderId, LabelId)>>,
    usernames: BTreeMap<CoderId, String>,
}

impl CodedItems {
    pub fn gather<'a>(
        annotations: impl IntoIterator<Item = &'a Annotation>,
        coders: impl IntoIterator<Item = &'a Coder>,
        classes: Vec<LabelId>,
        max_coders: usize,
    ) -> Self {
        let mut by_record: BTreeMap<RecordId, Vec<&Annotation>> = BTreeMap::new();
        for a in annotations {
            if a.source == AnnotationSource::Coder && !a.superseded {
                by_record.entry(a.record_id).or_default().push(a);
            }
        }
        let items = by_record
            .into_iter()
            .filter_map(|(record, mut votes)| {
                votes.sort_by_key(|a| (a.created_at, a.sequence));
                votes.truncate(max_coders);
                (votes.len() >= 2)
                    .then(|| (record, votes.iter().map(|a| (a.coder_id, a.label_id)).collect()))
            })
            .collect();
        let usernames = coders
            .into_iter()
            .map(|c| (c.id, c.username.clone()))
            .collect();
        Self {
            classes,
            items,
            usernames,
        }
    }

    fn username(&self, id: CoderId) -> String {
        self.usernames
            .get(&id)
            .cloned()
            .unwrap_or_else(|| id.to_string())
    }

    fn class_index(&self, label: LabelId) -> Option<usize> {
        self.classes.iter().position(|c| *c == label)
    }

    /// Orders a pair so the lexicographically smaller username comes first.
    pub fn ordered_pair(&self, a: CoderId, b: CoderId) -> (CoderId, CoderId) {
        if (self.username(a), a) <= (self.username(b), b) {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn coders(&self) -> BTreeSet<CoderId> {
        self.items.values().flatten().map(|(c, _)| *c).collect()
    }

    /// Shared items of one pair as (row coder's label, column coder's label).
    fn pair_votes(&self, row: CoderId, col: CoderId) -> Vec<(LabelId, LabelId)> {
        self.items
            .values()
            .filter_map(|votes| {
                let a = votes.iter().find(|(c, _)| *c == row)?.1;
                let b = votes.iter().find(|(c, _)| *c == col)?.1;
                Some((a, b))
            })
            .collect()
    }

    /// The agreement matrix for one pair, or summed over every pair when
    /// `pair` is `None`.
    pub fn agreement_matrix(&self, pair: Option<(CoderId, CoderId)>) -> AgreementTable {
        let mut table = AgreementTable::zeros(self.classes.len());
        let pairs: Vec<(CoderId, CoderId)> = match pair {
            Some((a, b)) => vec![self.ordered_pair(a, b)],
            None => self.all_pairs(),
        };
        for (row, col) in pairs {
            for (a, b) in self.pair_votes(row, col) {
                if let (Some(i), Some(j)) = (self.class_index(a), self.class_index(b)) {
                    table.counts[i][j] += 1;
                }
            }
        }
        table
    }

    fn all_pairs(&self) -> Vec<(CoderId, CoderId)> {
        let coders: Vec<CoderId> = self.coders().into_iter().collect();
        let mut pairs = Vec::new();
        for (i, a) in coders.iter().enumerate() {
            for b in &coders[i + 1..] {
                pairs.push(self.ordered_pair(*a, *b));
            }
        }
        pairs.sort_by_key(|(a, b)| (self.username(*a), self.username(*b)));
        pairs
    }

    /// Raw agreement for every pair that shares at least one item.
    pub fn pairwise_percent_agreement(&self) -> Vec<PairAgreement> {
        self.all_pairs()
            .into_iter()
            .filter_map(|(a, b)| {
                let votes = self.pair_votes(a, b);
                (!votes.is_empty()).then(|| PairAgreement {
                    coder_a: a,
                    coder_b: b,
                    shared_items: votes.len(),
                    agreement: votes.iter().filter(|(x, y)| x == y).count() as f64
                        / votes.len() as f64,
                })
            })
            .collect()
    }

    /// Ratings for items that carry exactly `raters` votes.
    pub fn ratings(&self, raters: usize) -> Option<RatingsMatrix> {
        let rows: Vec<Vec<u64>> = self
            .items
            .values()
            .filter(|votes| votes.len() == raters)
            .map(|votes| {
                let mut row = vec![0; self.classes.len()];
                for (_, label) in votes {
                    if let Some(i) = self.class_index(*label) {
                        row[i] += 1;
                    }
                }
                row
            })
            .collect();
        RatingsMatrix::new(rows, raters as u64).ok()
    }

    /// Cohen's kappa when exactly two coders share items, Fleiss' kappa over
    /// complete items otherwise.
    pub fn summary(&self, raters: usize) -> IrrSummary {
        let coders = self.coders();
        let pairwise = self.pairwise_percent_agreement();
        let matrix = self.agreement_matrix(None);
        if coders.len() == 2 {
            let mut it = coders.into_iter();
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            let table = self.agreement_matrix(Some((a, b)));
            return IrrSummary {
                statistic: Some(KappaStatistic::Cohen),
                kappa: cohens_kappa(&table).ok(),
                percent_agreement: table.observed_agreement(),
                item_count: table.total() as usize,
                pairwise,
                matrix,
            };
        }
        match self.ratings(raters) {
            Some(ratings) => IrrSummary {
                statistic: Some(KappaStatistic::Fleiss),
                kappa: Some(fleiss_kappa(&ratings)),
                percent_agreement: Some(percent_agreement_overall(&ratings)),
                item_count: ratings.items(),
                pairwise,
                matrix,
            },
            None => IrrSummary {
                statistic: None,
                kappa: None,
                percent_agreement: None,
                item_count: 0,
                pairwise,
                matrix,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrSummary {
    pub statistic: Option<KappaStatistic>,
    pub kappa: Option<f64>,
    pub percent_agreement: Option<f64>,
    pub item_count: usize,
    pub pairwise: Vec<PairAgreement>,
    /// Rows and columns follow the project's class order.
    pub matrix: AgreementTable,
}
