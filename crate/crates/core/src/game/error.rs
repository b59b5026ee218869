use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::corpus::StoreError;
use crate::geo::GeoError;
use crate::selection::SelectionError;

use super::Stage;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown family {0}")]
    UnknownFamily(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("unknown variant {0}")]
    UnknownVariant(String),
    #[error("unknown division {0}")]
    UnknownDivision(String),
    #[error("operation not allowed in stage {actual:?}")]
    WrongStage { actual: Stage },
    #[error("a quiz turn is already open")]
    TurnAlreadyOpen,
    #[error("no quiz turn is open")]
    NoOpenTurn,
    #[error("no match round is open")]
    NoOpenRound,
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("a dialect named {0:?} already exists")]
    DuplicateDialectName(String),
    #[error("fewer than three eligible sentences for a match round")]
    InsufficientData,
    #[error("match item {0} was already answered")]
    AlreadyAnswered(usize),
    #[error("no sentence groups available")]
    NoGroups,
    #[error("a retrain is already running for family {0}")]
    RetrainInProgress(String),
    #[error("cell {0} lies outside the family bounds")]
    OutOfBounds(String),
    #[error("cell {0} is both added and removed")]
    ConflictingEdit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model labels do not match the current label set")]
    ModelLabelMismatch,
    #[error(transparent)]
    Classifier(ClassifierError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl GameError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            GameError::UnknownFamily(_) => "unknown_family",
            GameError::UnknownSession(_) => "unknown_session",
            GameError::UnknownLabel(_) => "unknown_label",
            GameError::UnknownGroup(_) => "unknown_group",
            GameError::UnknownVariant(_) => "unknown_variant",
            GameError::UnknownDivision(_) => "unknown_division",
            GameError::WrongStage { .. } => "wrong_stage",
            GameError::TurnAlreadyOpen => "turn_already_open",
            GameError::NoOpenTurn => "no_open_turn",
            GameError::NoOpenRound => "no_open_round",
            GameError::EmptyText => "empty_text",
            GameError::DuplicateDialectName(_) => "duplicate_dialect_name",
            GameError::InsufficientData => "insufficient_data",
            GameError::AlreadyAnswered(_) => "already_answered",
            GameError::NoGroups => "no_groups",
            GameError::RetrainInProgress(_) => "retrain_in_progress",
            GameError::OutOfBounds(_) => "out_of_bounds",
            GameError::ConflictingEdit(_) => "conflicting_edit",
            GameError::InvalidInput(_) => "invalid_input",
            GameError::ModelLabelMismatch => "model_label_mismatch",
            GameError::Classifier(ClassifierError::SingleClassCorpus) => "single_class_corpus",
            GameError::Classifier(ClassifierError::NoFeasibleModel { .. }) => "no_feasible_model",
            GameError::Classifier(ClassifierError::EmptyTestSet) => "empty_test_set",
            GameError::Classifier(_) => "classifier_error",
            GameError::Internal(_) => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            GameError::UnknownFamily(_)
            | GameError::UnknownSession(_)
            | GameError::UnknownLabel(_)
            | GameError::UnknownGroup(_)
            | GameError::UnknownVariant(_)
            | GameError::UnknownDivision(_) => 404,
            GameError::WrongStage { .. }
            | GameError::TurnAlreadyOpen
            | GameError::NoOpenTurn
            | GameError::NoOpenRound
            | GameError::AlreadyAnswered(_)
            | GameError::InsufficientData
            | GameError::NoGroups
            | GameError::RetrainInProgress(_)
            | GameError::ModelLabelMismatch => 409,
            GameError::EmptyText
            | GameError::DuplicateDialectName(_)
            | GameError::OutOfBounds(_)
            | GameError::ConflictingEdit(_)
            | GameError::InvalidInput(_) => 400,
            GameError::Classifier(ClassifierError::SingleClassCorpus)
            | GameError::Classifier(ClassifierError::NoFeasibleModel { .. })
            | GameError::Classifier(ClassifierError::EmptyTestSet) => 409,
            GameError::Classifier(_) | GameError::Internal(_) => 500,
        }
    }
}

impl From<GeoError> for GameError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::OutOfBounds(c) => GameError::OutOfBounds(c.id()),
            GeoError::ConflictingEdit(c) => GameError::ConflictingEdit(c.id()),
            GeoError::UnknownDivision(d) => GameError::UnknownDivision(d),
            other => GameError::InvalidInput(other.to_string()),
        }
    }
}

impl From<StoreError> for GameError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownLabel(l) => GameError::UnknownLabel(l),
            StoreError::UnknownGroup(g) => GameError::UnknownGroup(g),
            StoreError::UnknownFamily(f) => GameError::UnknownFamily(f),
            StoreError::UnknownSession(s) => GameError::UnknownSession(s),
            StoreError::UnknownVariant(v) => GameError::UnknownVariant(v),
            StoreError::EmptyText => GameError::EmptyText,
            StoreError::DuplicateDialectName(n) => GameError::DuplicateDialectName(n),
            StoreError::InvalidPayload(m) => GameError::InvalidInput(m),
            StoreError::Geo(g) => g.into(),
            other => GameError::Internal(other.to_string()),
        }
    }
}

impl From<SelectionError> for GameError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::NoGroups | SelectionError::EmptyInput => GameError::NoGroups,
            SelectionError::ModelLabelMismatch { .. } => GameError::ModelLabelMismatch,
            SelectionError::UnknownLabel(l) => GameError::UnknownLabel(l),
            SelectionError::NotNormalized(p) => GameError::Internal(format!("distribution sums to {p}")),
        }
    }
}

impl From<ClassifierError> for GameError {
    fn from(e: ClassifierError) -> Self {
        GameError::Classifier(e)
    }
}
