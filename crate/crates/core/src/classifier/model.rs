use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{featurize, ModelConfig};

/// Probability per label; sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub probs: BTreeMap<String, f64>,
}

impl PredictionDistribution {
    pub fn uniform<'a>(labels: impl IntoIterator<Item = &'a String>) -> Self {
        let labels: Vec<&String> = labels.into_iter().collect();
        let p = 1.0 / labels.len() as f64;
        Self {
            probs: labels.into_iter().map(|l| (l.clone(), p)).collect(),
        }
    }

    pub fn get(&self, label: &str) -> f64 {
        self.probs.get(label).copied().unwrap_or(0.0)
    }

    /// Most probable label; ties resolve to the smaller label id.
    pub fn argmax(&self) -> Option<&str> {
        self.probs
            .iter()
            .fold(None, |best: Option<(&String, f64)>, (l, p)| match best {
                Some((_, bp)) if *p <= bp => best,
                _ => Some((l, *p)),
            })
            .map(|(l, _)| l.as_str())
    }

    /// Labels sorted by probability, highest first.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.probs.iter().map(|(l, p)| (l.as_str(), *p)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// Immutable trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub(crate) config: ModelConfig,
    pub(crate) label_index: Vec<String>,
    /// `hash_buckets × embedding_dim`, row-major.
    pub(crate) input: Vec<f32>,
    /// `labels × embedding_dim`, row-major.
    pub(crate) output: Vec<f32>,
}

impl TrainedModel {
    /// Model whose parameters are all zero; predicts the uniform distribution.
    pub fn zeros(config: ModelConfig, label_index: Vec<String>) -> Self {
        let dim = config.embedding_dim as usize;
        Self {
            input: vec![0.0; config.hash_buckets as usize * dim],
            output: vec![0.0; label_index.len() * dim],
            config,
            label_index,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn label_index(&self) -> &[String] {
        &self.label_index
    }

    pub fn dim(&self) -> usize {
        self.config.embedding_dim as usize
    }

    pub fn byte_size(&self) -> u64 {
        super::format::serialized_size(&self.config, &self.label_index)
    }

    /// Mean of the embedding rows for `features`; zero for no features.
    pub(crate) fn hidden(&self, features: &[u32]) -> Vec<f64> {
        let dim = self.dim();
        let mut h = vec![0.0f64; dim];
        if features.is_empty() {
            return h;
        }
        for f in features {
            let row = &self.input[*f as usize * dim..(*f as usize + 1) * dim];
            for (acc, w) in h.iter_mut().zip(row) {
                *acc += f64::from(*w);
            }
        }
        let n = features.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }

    pub(crate) fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        self.output
            .chunks_exact(dim)
            .map(|row| row.iter().zip(hidden).map(|(w, h)| f64::from(*w) * h).sum())
            .collect()
    }

    /// Class probabilities in `label_index` order.
    pub fn predict_features(&self, features: &[u32]) -> Vec<f64> {
        softmax(&self.logits(&self.hidden(features)))
    }

    pub fn predict(&self, text: &str) -> PredictionDistribution {
        let probs = self.predict_features(&featurize(text, &self.config));
        PredictionDistribution {
            probs: self.label_index.iter().cloned().zip(probs).collect(),
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}
