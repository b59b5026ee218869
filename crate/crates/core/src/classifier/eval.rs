use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClassifierError, LabeledText, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassScores>,
    pub split_seed: u64,
}

#[derive(Default)]
struct Tally {
    tp: usize,
    fp: usize,
    fn_: usize,
    support: usize,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Argmax evaluation. A prediction counts as correct when it is any of the
/// item's labels; each item is credited to exactly one class (the predicted
/// label when correct, otherwise its first label), so supports sum to the
/// test-set size and micro-F1 equals accuracy.
pub fn evaluate(model: &TrainedModel, test: &[LabeledText]) -> Result<EvalReport, ClassifierError> {
    let predictions: Vec<(String, &LabeledText)> = test
        .iter()
        .map(|item| {
            let dist = model.predict(&item.text);
            (dist.argmax().unwrap_or_default().to_string(), item)
        })
        .collect();
    report_from_predictions(&predictions)
}

pub(crate) fn report_from_predictions(
    predictions: &[(String, &LabeledText)],
) -> Result<EvalReport, ClassifierError> {
    if predictions.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut correct = 0usize;
    for (pred, item) in predictions {
        if item.labels.contains(pred) {
            correct += 1;
            let t = tallies.entry(pred.clone()).or_default();
            t.tp += 1;
            t.support += 1;
        } else {
            tallies.entry(pred.clone()).or_default().fp += 1;
            let truth = item.labels.iter().next().cloned().unwrap_or_default();
            let t = tallies.entry(truth).or_default();
            t.fn_ += 1;
            t.support += 1;
        }
    }
    let per_class: BTreeMap<String, ClassScores> = tallies
        .into_iter()
        .map(|(l, t)| {
            let precision = ratio(t.tp, t.tp + t.fp);
            let recall = ratio(t.tp, t.tp + t.fn_);
            (l, ClassScores { precision, recall, f1: f1(precision, recall), support: t.support })
        })
        .collect();
    let macro_f1 = per_class.values().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport {
        micro_f1: correct as f64 / predictions.len() as f64,
        macro_f1,
        per_class,
        split_seed: 0,
    })
}

impl EvalReport {
    pub fn with_split_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.per_class.keys().map(String::as_str).collect()
    }
}
