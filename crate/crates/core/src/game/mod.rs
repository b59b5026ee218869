//! Session state machine and the engine that owns served models.
//!
//! A session starts on the QUIZ path (the player knows the language) or the
//! MATCH path. Quiz turns cycle `QUIZ -> REVIEW -> QUIZ`; every review adds
//! the rewrite to the corpus. Confirming a prediction raises the level by one
//! tier, correcting it does not.

mod engine;
mod error;
mod session;

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use engine::{Engine, FamilyStats, JobState, JobStatus, RetrainOutcome, TrainingSlot};
pub use error::GameError;
pub use session::{
    GamePath, MatchItem, MatchItemView, MatchRound, MatchRoundView, QuizTurn, Session, SessionView, Stage,
};

use crate::classifier::{Budget, ModelConfig, PredictionDistribution};
use crate::geo::{HexCell, Point};
use crate::selection::{RetrainPolicy, Tier};

/// When automatic retraining runs once [`crate::selection::should_retrain`]
/// fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// Only on explicit request.
    Manual,
    /// On the thread that handled the review; deterministic.
    Inline,
    /// On a worker thread, one per family.
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Training {
    Fixed(ModelConfig),
    Autotune { budget: Budget, max_bytes: u64 },
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Extra labels at or above this probability are shown besides the top-1.
    pub tau: f64,
    pub retrain: RetrainPolicy,
    pub retrain_mode: RetrainMode,
    pub idle_timeout: Duration,
    pub training: Training,
    /// Seeds splits, training and session ids. `None` draws from the OS.
    pub seed: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            retrain: RetrainPolicy::default(),
            retrain_mode: RetrainMode::Background,
            idle_timeout: Duration::from_secs(30 * 60),
            training: Training::Fixed(ModelConfig::default()),
            seed: None,
        }
    }
}

/// What the player sees when a quiz turn opens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizPrompt {
    pub group_id: String,
    pub standard_text: String,
    /// Tier the group was drawn from, after fallback.
    pub tier: Tier,
    pub suggestion_seed_words: Vec<String>,
}

/// Outline of one predicted dialect's region for the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPayload {
    pub label_id: String,
    pub name: String,
    pub probability: f64,
    /// Closed rings in (lon, lat); the outer ring runs counter-clockwise.
    pub rings: Vec<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub prediction: PredictionDistribution,
    pub predicted_labels: Vec<String>,
    pub region_payloads: Vec<RegionPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewResult {
    pub new_level: Tier,
    pub variant_id: String,
    /// Label the rewrite was stored under when it was a correction.
    pub label_id: Option<String>,
    pub event_ids: Vec<u64>,
    /// Set when this review triggered an inline retrain.
    pub retrained_to: Option<u64>,
}

/// The player's answer when the prediction was wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Label(String),
    NewDialect(String),
}

/// Cells to add to and remove from the corrected dialect's region. A lasso
/// polygon, if present, adds every in-bounds cell whose center it contains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoEditRequest {
    #[serde(default)]
    pub add: BTreeSet<HexCell>,
    #[serde(default)]
    pub remove: BTreeSet<HexCell>,
    #[serde(default)]
    pub lasso: Option<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAnswer {
    pub reference_divisions: BTreeSet<String>,
    pub score: f64,
    pub round_complete: bool,
}

/// |a ∩ b| / |a ∪ b|; two empty sets score 1.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Top-1 plus every label with probability at least `tau`, most probable
/// first.
pub fn predicted_labels(dist: &PredictionDistribution, tau: f64) -> Vec<String> {
    dist.ranked()
        .into_iter()
        .enumerate()
        .filter(|(i, (_, p))| *i == 0 || *p >= tau)
        .map(|(_, (l, _))| l.to_string())
        .collect()
}

#[cfg(test)]
mod tests;
