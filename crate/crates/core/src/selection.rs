//! Entropy-driven sentence selection.
//!
//! A parallel group's difficulty is the sum over every known dialect `k` of
//! the mean prediction entropy of its variants labeled `k`. A dialect with
//! no variant in the group contributes the maximum entropy `ln |K|`, so
//! groups with gaps rank as hard until someone fills them. Groups are then
//! split into Hard (top 20%), Normal (middle 60%) and Easy (bottom 20%).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{PredictionDistribution, TrainedModel};
use crate::corpus::{CorpusView, ParallelGroup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("label {0} is not in the label set")]
    UnknownLabel(String),
    #[error("no records to tier")]
    EmptyInput,
    #[error("family has no sentence groups")]
    NoGroups,
    #[error("model labels {model:?} do not match the corpus label set {corpus:?}")]
    ModelLabelMismatch { model: Vec<String>, corpus: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tier {
    Easy,
    Normal,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Normal, Tier::Hard];

    /// One step harder, capped at Hard.
    pub fn step_up(self) -> Tier {
        match self {
            Tier::Easy => Tier::Normal,
            Tier::Normal | Tier::Hard => Tier::Hard,
        }
    }

    /// Requested tier first, then easier tiers nearest-first, then harder.
    pub fn fallback_order(self) -> [Tier; 3] {
        match self {
            Tier::Easy => [Tier::Easy, Tier::Normal, Tier::Hard],
            Tier::Normal => [Tier::Normal, Tier::Easy, Tier::Hard],
            Tier::Hard => [Tier::Hard, Tier::Normal, Tier::Easy],
        }
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tier::Easy => "EASY",
            Tier::Normal => "NORMAL",
            Tier::Hard => "HARD",
        })
    }
}

impl std::str::FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EASY" => Ok(Tier::Easy),
            "NORMAL" => Ok(Tier::Normal),
            "HARD" => Ok(Tier::Hard),
            other => Err(format!("unknown tier {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntropyBasis {
    /// k ∈ C: averaged over the group's variants labeled k.
    Observed,
    /// k ∉ C: maximum entropy ln |K|.
    MaxFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntropy {
    pub label_id: String,
    pub value: f64,
    pub basis: EntropyBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub group_id: String,
    pub score: f64,
    pub tier: Tier,
    pub model_version: u64,
}

/// Anything that maps a sentence to a distribution over a fixed label index.
pub trait Predictor {
    fn label_index(&self) -> &[String];
    fn predict(&self, text: &str) -> PredictionDistribution;
}

impl Predictor for TrainedModel {
    fn label_index(&self) -> &[String] {
        TrainedModel::label_index(self)
    }

    fn predict(&self, text: &str) -> PredictionDistribution {
        TrainedModel::predict(self, text)
    }
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    -probs
        .into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

pub fn sentence_entropy(dist: &PredictionDistribution) -> Result<f64, SelectionError> {
    let total = dist.total();
    if (total - 1.0).abs() > 1e-6 {
        return Err(SelectionError::NotNormalized(total));
    }
    Ok(entropy(dist.probs.values().copied()))
}

/// ln |K|.
pub fn max_entropy(label_count: usize) -> f64 {
    (label_count as f64).ln()
}

fn check_model(model: &dyn Predictor, label_set: &BTreeSet<String>) -> Result<(), SelectionError> {
    let model_labels: BTreeSet<&String> = model.label_index().iter().collect();
    if model_labels.len() != label_set.len() || !label_set.iter().all(|l| model_labels.contains(l)) {
        return Err(SelectionError::ModelLabelMismatch {
            model: model.label_index().to_vec(),
            corpus: label_set.iter().cloned().collect(),
        });
    }
    Ok(())
}

/// Memoized sentence entropies, keyed by variant text.
struct EntropyCache<'a> {
    model: &'a dyn Predictor,
    cache: HashMap<String, f64>,
}

impl<'a> EntropyCache<'a> {
    fn new(model: &'a dyn Predictor) -> Self {
        Self { model, cache: HashMap::new() }
    }

    fn get(&mut self, text: &str) -> Result<f64, SelectionError> {
        if let Some(h) = self.cache.get(text) {
            return Ok(*h);
        }
        let h = sentence_entropy(&self.model.predict(text))?;
        self.cache.insert(text.to_string(), h);
        Ok(h)
    }
}

fn class_entropy_cached(
    group: &ParallelGroup,
    k: &str,
    label_set: &BTreeSet<String>,
    cache: &mut EntropyCache<'_>,
) -> Result<ClassEntropy, SelectionError> {
    if !label_set.contains(k) {
        return Err(SelectionError::UnknownLabel(k.to_string()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in group.variants_with(k) {
        sum += cache.get(&v.text)?;
        n += 1;
    }
    Ok(if n == 0 {
        ClassEntropy {
            label_id: k.to_string(),
            value: max_entropy(label_set.len()),
            basis: EntropyBasis::MaxFallback,
        }
    } else {
        ClassEntropy {
            label_id: k.to_string(),
            value: sum / n as f64,
            basis: EntropyBasis::Observed,
        }
    })
}

pub fn class_entropy(
    group: &ParallelGroup,
    k: &str,
    model: &dyn Predictor,
    label_set: &BTreeSet<String>,
) -> Result<ClassEntropy, SelectionError> {
    check_model(model, label_set)?;
    class_entropy_cached(group, k, label_set, &mut EntropyCache::new(model))
}

/// Per-label entropies of one group, in label order.
pub fn difficulty_breakdown(
    group: &ParallelGroup,
    model: &dyn Predictor,
    label_set: &BTreeSet<String>,
) -> Result<Vec<ClassEntropy>, SelectionError> {
    check_model(model, label_set)?;
    let mut cache = EntropyCache::new(model);
    label_set
        .iter()
        .map(|k| class_entropy_cached(group, k, label_set, &mut cache))
        .collect()
}

/// D(s): the sum of every label's class entropy.
pub fn difficulty_score(
    group: &ParallelGroup,
    model: &dyn Predictor,
    label_set: &BTreeSet<String>,
) -> Result<f64, SelectionError> {
    Ok(difficulty_breakdown(group, model, label_set)?.iter().map(|c| c.value).sum())
}

/// Sort by (score desc, group_id asc); the first ⌈0.2M⌉ are Hard, the last
/// ⌊0.2M⌋ Easy, the rest Normal.
pub fn assign_tiers(mut records: Vec<DifficultyRecord>) -> Result<Vec<DifficultyRecord>, SelectionError> {
    if records.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    records.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.group_id.cmp(&b.group_id)));
    let m = records.len();
    let hard = (m * 2).div_ceil(10);
    let easy = (m * 2) / 10;
    for (i, r) in records.iter_mut().enumerate() {
        r.tier = if i < hard {
            Tier::Hard
        } else if i >= m - easy {
            Tier::Easy
        } else {
            Tier::Normal
        };
    }
    Ok(records)
}

/// Current tiering of one family, replaced wholesale on rescore.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierTable {
    pub model_version: u64,
    pub records: Vec<DifficultyRecord>,
}

impl TierTable {
    pub fn groups_in(&self, tier: Tier) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .records
            .iter()
            .filter(|r| r.tier == tier)
            .map(|r| r.group_id.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn tier_of(&self, group_id: &str) -> Option<Tier> {
        self.records.iter().find(|r| r.group_id == group_id).map(|r| r.tier)
    }

    pub fn counts(&self) -> BTreeMap<Tier, usize> {
        let mut c: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|t| (*t, 0)).collect();
        for r in &self.records {
            *c.get_mut(&r.tier).unwrap() += 1;
        }
        c
    }

    pub fn mean_score(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.score).sum::<f64>() / self.records.len() as f64
    }
}

/// Pick an unseen group from the requested tier, falling back through
/// [`Tier::fallback_order`] and finally allowing repeats. Marks the pick seen.
pub fn next_sentence(
    table: &TierTable,
    seen: &mut BTreeSet<String>,
    requested: Tier,
    rng: &mut impl Rng,
) -> Result<(String, Tier), SelectionError> {
    if table.records.is_empty() {
        return Err(SelectionError::NoGroups);
    }
    let order = requested.fallback_order();
    let pick = order
        .iter()
        .find_map(|t| {
            let fresh: Vec<&str> = table.groups_in(*t).into_iter().filter(|g| !seen.contains(*g)).collect();
            (!fresh.is_empty()).then(|| (fresh[rng.gen_range(0..fresh.len())].to_string(), *t))
        })
        .or_else(|| {
            order.iter().find_map(|t| {
                let all = table.groups_in(*t);
                (!all.is_empty()).then(|| (all[rng.gen_range(0..all.len())].to_string(), *t))
            })
        })
        .ok_or(SelectionError::NoGroups)?;
    seen.insert(pick.0.clone());
    Ok(pick)
}

/// Score every group of the view and re-tier. The model must cover exactly
/// the view's label set.
pub fn rescore_all(
    view: &CorpusView,
    model: &dyn Predictor,
    model_version: u64,
) -> Result<TierTable, SelectionError> {
    let label_set = view.label_set();
    check_model(model, &label_set)?;
    let mut cache = EntropyCache::new(model);
    let mut records = Vec::with_capacity(view.groups().len());
    for group in view.groups().values() {
        let mut score = 0.0;
        for k in &label_set {
            score += class_entropy_cached(group, k, &label_set, &mut cache)?.value;
        }
        records.push(DifficultyRecord {
            group_id: group.group_id.clone(),
            score,
            tier: Tier::Normal,
            model_version,
        });
    }
    if records.is_empty() {
        return Ok(TierTable { model_version, records });
    }
    Ok(TierTable { model_version, records: assign_tiers(records)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainPolicy {
    pub threshold: u64,
}

impl Default for RetrainPolicy {
    fn default() -> Self {
        Self { threshold: 50 }
    }
}

/// Retrain once enough contributions have accumulated or the label set grew.
pub fn should_retrain(accepted_since_last_train: u64, label_set_grew: bool, policy: RetrainPolicy) -> bool {
    label_set_grew || accepted_since_last_train >= policy.threshold.max(1)
}
