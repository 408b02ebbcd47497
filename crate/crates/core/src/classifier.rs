//! Multinomial logistic regression over sparse tf-idf vectors.
//!
//! The objective is mean softmax cross-entropy plus `(λ/2)·‖W‖²` (intercepts
//! are not penalized). Training is full-batch gradient descent with an Armijo
//! backtracking line search starting from zero weights, so a fit is a pure
//! function of its inputs.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::LabelId;
use crate::vectorizer::SparseVector;

pub const DEFAULT_L2_LAMBDA: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 500;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

const ARMIJO_C: f64 = 1e-4;
const INITIAL_STEP: f64 = 4.0;
const MAX_STEP: f64 = 1e4;
const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<LabelId>,
    /// Row-major `classes × features`.
    pub coefficients: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub n_features: usize,
    pub l2_lambda: f64,
}

impl LinearModel {
    pub fn zeros(classes: Vec<LabelId>, n_features: usize, l2_lambda: f64) -> Self {
        let k = classes.len();
        Self {
            classes,
            coefficients: vec![0.0; k * n_features],
            intercepts: vec![0.0; k],
            n_features,
            l2_lambda,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.coefficients[class * self.n_features..(class + 1) * self.n_features]
    }

    pub fn weight_norm(&self) -> f64 {
        self.coefficients.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes())
            .map(|c| {
                let row = self.row(c);
                self.intercepts[c] + x.entries.iter().map(|(i, v)| v * row[*i]).sum::<f64>()
            })
            .collect()
    }

    fn check_dimension(&self, x: &SparseVector) -> Result<()> {
        if x.dimension != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.dimension,
            });
        }
        Ok(())
    }
}

/// Per-class probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(pub Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if values.is_empty()
            || values.iter().any(|p| !(0.0..=1.0).contains(p))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidInput(format!(
                "not a probability vector: {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn predict_proba(model: &LinearModel, x: &SparseVector) -> Result<ProbabilityVector> {
    model.check_dimension(x)?;
    Ok(ProbabilityVector(softmax(&model.scores(x))))
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub coefficients: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.coefficients
            .iter()
            .chain(&self.intercepts)
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    fn squared_norm(&self) -> f64 {
        self.coefficients
            .iter()
            .chain(&self.intercepts)
            .map(|g| g * g)
            .sum()
    }
}

fn validate_inputs(model: &LinearModel, xs: &[SparseVector], ys: &[usize]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty training input".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if let Some(y) = ys.iter().find(|y| **y >= model.n_classes()) {
        return Err(Error::InvalidInput(format!("class index {y} out of range")));
    }
    xs.iter().try_for_each(|x| model.check_dimension(x))
}

fn regularized_loss(model: &LinearModel, xs: &[SparseVector], ys: &[usize]) -> f64 {
    let n = xs.len() as f64;
    let mut data_loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let scores = model.scores(x);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        data_loss += log_sum - scores[y];
    }
    let penalty: f64 = model.coefficients.iter().map(|w| w * w).sum();
    data_loss / n + 0.5 * model.l2_lambda * penalty
}

fn loss_and_gradient_unchecked(
    model: &LinearModel,
    xs: &[SparseVector],
    ys: &[usize],
) -> (f64, Gradient) {
    let n = xs.len() as f64;
    let d = model.n_features;
    let mut grad = Gradient {
        coefficients: model
            .coefficients
            .iter()
            .map(|w| model.l2_lambda * w)
            .collect(),
        intercepts: vec![0.0; model.n_classes()],
    };
    let mut data_loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let scores = model.scores(x);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        data_loss += log_sum - scores[y];
        for (c, s) in scores.iter().enumerate() {
            let residual = ((s - log_sum).exp() - if c == y { 1.0 } else { 0.0 }) / n;
            grad.intercepts[c] += residual;
            let row = &mut grad.coefficients[c * d..(c + 1) * d];
            for (i, v) in &x.entries {
                row[*i] += residual * v;
            }
        }
    }
    let penalty: f64 = model.coefficients.iter().map(|w| w * w).sum();
    (data_loss / n + 0.5 * model.l2_lambda * penalty, grad)
}

/// Mean cross-entropy plus the L2 penalty, and its exact gradient.
pub fn loss_and_gradient(
    model: &LinearModel,
    xs: &[SparseVector],
    ys: &[usize],
) -> Result<(f64, Gradient)> {
    validate_inputs(model, xs, ys)?;
    Ok(loss_and_gradient_unchecked(model, xs, ys))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    /// Loss after each accepted step, starting with the initial loss.
    pub loss_trace: Vec<f64>,
}

/// Fits a model over `classes` (indices in `ys` refer to this order).
pub fn train(
    xs: &[SparseVector],
    ys: &[usize],
    classes: Vec<LabelId>,
    l2_lambda: f64,
) -> Result<LinearModel> {
    train_with_report(xs, ys, classes, l2_lambda).map(|(m, _)| m)
}

pub fn train_with_report(
    xs: &[SparseVector],
    ys: &[usize],
    classes: Vec<LabelId>,
    l2_lambda: f64,
) -> Result<(LinearModel, TrainReport)> {
    let n_features = xs.first().map(|x| x.dimension).unwrap_or(0);
    let mut model = LinearModel::zeros(classes, n_features, l2_lambda);
    validate_inputs(&model, xs, ys)?;
    if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
        return Err(Error::InvalidInput("l2_lambda must be finite and non-negative".into()));
    }
    let first = ys[0];
    if ys.iter().all(|y| *y == first) {
        return Err(Error::DegenerateTrainingSet);
    }

    let (mut loss, mut grad) = loss_and_gradient_unchecked(&model, xs, ys);
    let mut report = TrainReport {
        epochs: 0,
        converged: false,
        loss_trace: vec![loss],
    };
    let mut step = INITIAL_STEP;
    while report.epochs < MAX_EPOCHS {
        if grad.max_abs() <= GRADIENT_TOLERANCE {
            report.converged = true;
            break;
        }
        report.epochs += 1;
        let g2 = grad.squared_norm();
        let mut candidate = model.clone();
        let accepted = loop {
            for (w, g) in candidate.coefficients.iter_mut().zip(&grad.coefficients) {
                *w -= step * g;
            }
            for (b, g) in candidate.intercepts.iter_mut().zip(&grad.intercepts) {
                *b -= step * g;
            }
            let trial = regularized_loss(&candidate, xs, ys);
            if trial <= loss - ARMIJO_C * step * g2 {
                break true;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break false;
            }
            candidate.coefficients.clone_from(&model.coefficients);
            candidate.intercepts.clone_from(&model.intercepts);
        };
        if !accepted {
            break;
        }
        model = candidate;
        (loss, grad) = loss_and_gradient_unchecked(&model, xs, ys);
        report.loss_trace.push(loss);
        step = (step * 2.0).min(MAX_STEP);
    }
    if !report.converged && grad.max_abs() <= GRADIENT_TOLERANCE {
        report.converged = true;
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub batch_index: usize,
    pub metrics: Metrics,
    pub labeled_count: usize,
    pub model: LinearModel,
    pub trained_at: DateTime<Utc>,
}

/// Number of folds actually used: `folds` capped at the minority-class
/// count, never below 2.
pub fn effective_folds(ys: &[usize], folds: usize) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for y in ys {
        *counts.entry(*y).or_insert(0usize) += 1;
    }
    let minority = counts.values().copied().min().unwrap_or(0);
    folds.min(minority).max(2)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing the rotation across classes so fold sizes stay balanced.
pub fn stratified_folds(ys: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for (i, y) in ys.iter().enumerate() {
        by_class.entry(*y).or_default().push(i);
    }
    let mut assignment = vec![0; ys.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Stratified k-fold evaluation. Folds whose training part holds a single
/// class predict that class.
pub fn cross_validate(
    xs: &[SparseVector],
    ys: &[usize],
    classes: &[LabelId],
    folds: usize,
    seed: u64,
    l2_lambda: f64,
) -> Result<Metrics> {
    let mut present: Vec<usize> = ys.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::TooFewClasses);
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    let k = effective_folds(ys, folds);
    if ys.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} examples cannot fill {k} folds",
            ys.len()
        )));
    }
    let assignment = stratified_folds(ys, k, seed);
    let mut total = Metrics {
        accuracy: 0.0,
        macro_precision: 0.0,
        macro_recall: 0.0,
        macro_f1: 0.0,
    };
    for fold in 0..k {
        let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
        for (i, f) in assignment.iter().enumerate() {
            if *f == fold {
                test_x.push(xs[i].clone());
                test_y.push(ys[i]);
            } else {
                train_x.push(xs[i].clone());
                train_y.push(ys[i]);
            }
        }
        let predictions: Vec<usize> =
            match train(&train_x, &train_y, classes.to_vec(), l2_lambda) {
                Ok(model) => test_x
                    .iter()
                    .map(|x| predict_proba(&model, x).map(|p| p.argmax()))
                    .collect::<Result<_>>()?,
                Err(Error::DegenerateTrainingSet) => vec![train_y[0]; test_y.len()],
                Err(e) => return Err(e),
            };
        let m = classification_metrics(&test_y, &predictions, &present);
        total.accuracy += m.accuracy;
        total.macro_precision += m.macro_precision;
        total.macro_recall += m.macro_recall;
        total.macro_f1 += m.macro_f1;
    }
    let k = k as f64;
    Ok(Metrics {
        accuracy: total.accuracy / k,
        macro_precision: total.macro_precision / k,
        macro_recall: total.macro_recall / k,
        macro_f1: total.macro_f1 / k,
    })
}

/// Accuracy and macro-averaged precision, recall and F1 over `classes`.
/// A class with a zero denominator contributes 0 to that average.
pub fn classification_metrics(truth: &[usize], predicted: &[usize], classes: &[usize]) -> Metrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for &c in classes {
        let tp = truth
            .iter()
            .zip(predicted)
            .filter(|(t, p)| **t == c && **p == c)
            .count();
        let predicted_c = predicted.iter().filter(|p| **p == c).count();
        let actual_c = truth.iter().filter(|t| **t == c).count();
        precision += ratio(tp, predicted_c);
        recall += ratio(tp, actual_c);
        f1 += ratio(2 * tp, predicted_c + actual_c);
    }
    let k = classes.len().max(1) as f64;
    Metrics {
        accuracy: ratio(correct, truth.len()),
        macro_precision: precision / k,
        macro_recall: recall / k,
        macro_f1: f1 / k,
    }
}
