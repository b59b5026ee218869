use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::softmax;
use super::{featurize, ClassifierError, ModelConfig, TrainedModel};
use crate::corpus::CorpusView;

/// A dialect sentence with every label it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub variant_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
}

impl LabeledText {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: &[&str]) -> Self {
        Self {
            variant_id: id.into(),
            text: text.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Labeled sentences plus the label index a model trained on them uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<LabeledText>,
    pub label_index: Vec<String>,
}

impl Dataset {
    pub fn from_view(view: &CorpusView) -> Self {
        let items = view
            .groups()
            .values()
            .flat_map(|g| g.variants.iter())
            .map(|v| LabeledText {
                variant_id: v.variant_id.clone(),
                text: v.text.clone(),
                labels: v.labels.clone(),
            })
            .collect();
        Self {
            items,
            label_index: view.label_set().into_iter().collect(),
        }
    }

    pub fn with_items(&self, items: Vec<LabeledText>) -> Self {
        Self { items, label_index: self.label_index.clone() }
    }

    /// Distinct labels actually carried by items.
    pub fn observed_labels(&self) -> BTreeSet<&str> {
        self.items.iter().flat_map(|i| i.labels.iter().map(String::as_str)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledText>,
    pub test: Vec<LabeledText>,
    /// Labels with fewer than two variants; their variants all went to train.
    pub too_small: Vec<String>,
}

/// Variant-level split stratified by each variant's first label. Variants
/// carrying a label with fewer than two variants stay in train.
pub fn split_train_test(items: &[LabeledText], ratio: f64, seed: u64) -> Split {
    let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
    for it in items {
        for l in &it.labels {
            *per_label.entry(l).or_default() += 1;
        }
    }
    let too_small: BTreeSet<&str> = per_label.iter().filter(|(_, n)| **n < 2).map(|(l, _)| *l).collect();

    let mut train = Vec::new();
    let mut strata: BTreeMap<&str, Vec<&LabeledText>> = BTreeMap::new();
    for it in items {
        if it.labels.iter().any(|l| too_small.contains(l.as_str())) {
            train.push(it.clone());
        } else if let Some(first) = it.labels.iter().next() {
            strata.entry(first).or_default().push(it);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    for (_, mut members) in strata {
        members.sort_by(|a, b| a.variant_id.cmp(&b.variant_id));
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_test = ((1.0 - ratio) * n as f64).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        }
        for (i, m) in members.into_iter().enumerate() {
            if i < n_test {
                test.push(m.clone());
            } else {
                train.push(m.clone());
            }
        }
    }
    Split {
        train,
        test,
        too_small: too_small.into_iter().map(str::to_string).collect(),
    }
}

/// Feature bag and class index for one (variant, label) pair.
struct Example {
    features: Vec<u32>,
    label: usize,
}

fn examples(
    items: &[LabeledText],
    label_index: &[String],
    config: &ModelConfig,
) -> Result<Vec<Example>, ClassifierError> {
    let pos: BTreeMap<&str, usize> = label_index.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut out = Vec::new();
    for it in items {
        let features = featurize(&it.text, config);
        for l in &it.labels {
            let label = *pos.get(l.as_str()).ok_or_else(|| ClassifierError::UnknownLabel(l.clone()))?;
            out.push(Example { features: features.clone(), label });
        }
    }
    Ok(out)
}

/// Derivative of the log loss with respect to each logit: `p - onehot(y)`.
fn logit_gradient(probs: &[f64], label: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, p)| if j == label { p - 1.0 } else { *p })
        .collect()
}

/// Gradient of `-ln p(label | features)` with respect to the output matrix,
/// row-major `labels × dim`, plus the loss itself.
pub fn output_gradient(model: &TrainedModel, features: &[u32], label: usize) -> (f64, Vec<f64>) {
    let h = model.hidden(features);
    let probs = softmax(&model.logits(&h));
    let g = logit_gradient(&probs, label);
    let grad = g.iter().flat_map(|gj| h.iter().map(move |hd| gj * hd)).collect();
    (-probs[label].ln(), grad)
}

fn mean_loss(model: &TrainedModel, data: &[Example]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|e| -model.predict_features(&e.features)[e.label].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / data.len() as f64
}

pub fn train(
    items: &[LabeledText],
    label_index: &[String],
    config: &ModelConfig,
) -> Result<TrainedModel, ClassifierError> {
    train_inner(items, label_index, config, false).map(|(m, _)| m)
}

/// Like [`train`], also returning the mean training loss after each epoch.
pub fn train_with_history(
    items: &[LabeledText],
    label_index: &[String],
    config: &ModelConfig,
) -> Result<(TrainedModel, Vec<f64>), ClassifierError> {
    train_inner(items, label_index, config, true)
}

fn train_inner(
    items: &[LabeledText],
    label_index: &[String],
    config: &ModelConfig,
    track_loss: bool,
) -> Result<(TrainedModel, Vec<f64>), ClassifierError> {
    config.validate()?;
    if items.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let data = examples(items, label_index, config)?;
    let distinct: BTreeSet<usize> = data.iter().map(|e| e.label).collect();
    if distinct.len() < 2 {
        return Err(ClassifierError::SingleClassCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.embedding_dim as usize;
    let bound = 1.0 / dim as f32;
    let mut model = TrainedModel::zeros(config.clone(), label_index.to_vec());
    for w in model.input.iter_mut() {
        *w = rng.gen_range(-bound..bound);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let total_steps = (config.epochs as usize * data.len()) as f64;
    let mut step = 0usize;
    let mut history = Vec::new();
    let mut grad_h = vec![0.0f64; dim];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = &data[i];
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps);
            step += 1;
            if ex.features.is_empty() {
                continue;
            }
            let h = model.hidden(&ex.features);
            let probs = softmax(&model.logits(&h));
            let g = logit_gradient(&probs, ex.label);
            grad_h.iter_mut().for_each(|x| *x = 0.0);
            for (j, gj) in g.iter().enumerate() {
                let row = &mut model.output[j * dim..(j + 1) * dim];
                for d in 0..dim {
                    grad_h[d] += gj * f64::from(row[d]);
                    row[d] -= (lr * gj * h[d]) as f32;
                }
            }
            let scale = lr / ex.features.len() as f64;
            for f in &ex.features {
                let row = &mut model.input[*f as usize * dim..(*f as usize + 1) * dim];
                for d in 0..dim {
                    row[d] -= (scale * grad_h[d]) as f32;
                }
            }
        }
        if track_loss {
            history.push(mean_loss(&model, &data));
        }
    }
    Ok((model, history))
}
