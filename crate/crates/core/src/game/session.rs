use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::PredictionDistribution;
use crate::selection::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GamePath {
    Quiz,
    Match,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Choice,
    Quiz,
    Review,
    Match,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizTurn {
    pub group_id: String,
    pub standard_text: String,
    pub tier_at_issue: Tier,
    pub submitted_text: Option<String>,
    pub prediction: Option<PredictionDistribution>,
    pub predicted_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchItem {
    pub variant_id: String,
    pub group_id: String,
    pub text: String,
    pub reference_divisions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRound {
    pub items: Vec<MatchItem>,
    pub answers: Vec<Option<BTreeSet<String>>>,
    pub scores: Vec<Option<f64>>,
}

impl MatchRound {
    pub fn is_complete(&self) -> bool {
        self.scores.iter().all(Option::is_some)
    }

    /// Client view: references are hidden until the item is answered.
    pub fn public(&self) -> MatchRoundView {
        MatchRoundView {
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(i, it)| MatchItemView {
                    index: i,
                    variant_id: it.variant_id.clone(),
                    text: it.text.clone(),
                    answer: self.answers[i].clone(),
                    score: self.scores[i],
                    reference_divisions: self.answers[i].as_ref().map(|_| it.reference_divisions.clone()),
                })
                .collect(),
            complete: self.is_complete(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchItemView {
    pub index: usize,
    pub variant_id: String,
    pub text: String,
    pub answer: Option<BTreeSet<String>>,
    pub score: Option<f64>,
    pub reference_divisions: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRoundView {
    pub items: Vec<MatchItemView>,
    pub complete: bool,
}

/// One player's game.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub family_id: String,
    pub path: GamePath,
    pub stage: Stage,
    pub level: Tier,
    pub seen_groups: BTreeSet<String>,
    pub turn: Option<QuizTurn>,
    pub round: Option<MatchRound>,
    pub rounds_played: u32,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) last_active: DateTime<Utc>,
}

impl Session {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            family_id: self.family_id.clone(),
            path: self.path,
            stage: self.stage,
            level: self.level,
            rounds_played: self.rounds_played,
            seen_groups: self.seen_groups.len(),
            turn: self.turn.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub family_id: String,
    pub path: GamePath,
    pub stage: Stage,
    pub level: Tier,
    pub rounds_played: u32,
    pub seen_groups: usize,
    pub turn: Option<QuizTurn>,
}
