use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{FamilyState, Provenance, StoreError};
use crate::geo::{edit_region, HexCell};
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Confirm,
    Relabel,
    NewDialect,
    GeoEdit,
    MatchCorrection,
}

/// Kind-specific payload. Each payload names its family and carries enough
/// to replay the corpus effect without any other input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventBody {
    /// The user accepted the prediction; the rewrite joins the corpus.
    Confirm {
        family_id: String,
        group_id: String,
        variant_id: String,
        text: String,
        labels: BTreeSet<String>,
    },
    /// The user picked a different existing dialect.
    Relabel {
        family_id: String,
        group_id: String,
        variant_id: String,
        text: String,
        label: String,
        predicted: Vec<String>,
    },
    /// The user created a dialect; the rewrite joins the corpus under it.
    NewDialect {
        family_id: String,
        label_id: String,
        name: String,
        group_id: String,
        variant_id: String,
        text: String,
    },
    GeoEdit {
        family_id: String,
        label_id: String,
        add: BTreeSet<HexCell>,
        remove: BTreeSet<HexCell>,
    },
    /// Disagreement with a Match reference; stored only.
    MatchCorrection {
        family_id: String,
        variant_id: String,
        divisions: BTreeSet<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::Confirm { .. } => EventKind::Confirm,
            EventBody::Relabel { .. } => EventKind::Relabel,
            EventBody::NewDialect { .. } => EventKind::NewDialect,
            EventBody::GeoEdit { .. } => EventKind::GeoEdit,
            EventBody::MatchCorrection { .. } => EventKind::MatchCorrection,
        }
    }

    pub fn family_id(&self) -> &str {
        match self {
            EventBody::Confirm { family_id, .. }
            | EventBody::Relabel { family_id, .. }
            | EventBody::NewDialect { family_id, .. }
            | EventBody::GeoEdit { family_id, .. }
            | EventBody::MatchCorrection { family_id, .. } => family_id,
        }
    }

    /// A confirmation payload with the variant id the store will assign.
    pub fn confirm(
        state: &FamilyState,
        group_id: &str,
        text: &str,
        labels: BTreeSet<String>,
    ) -> Result<Self, StoreError> {
        let (variant_id, text) = state.plan_variant(group_id, text, &labels)?;
        Ok(EventBody::Confirm {
            family_id: state.family.family_id.clone(),
            group_id: group_id.to_string(),
            variant_id,
            text,
            labels,
        })
    }

    pub fn relabel(
        state: &FamilyState,
        group_id: &str,
        text: &str,
        label: &str,
        predicted: Vec<String>,
    ) -> Result<Self, StoreError> {
        let (variant_id, text) = state.plan_variant(group_id, text, &BTreeSet::from([label.to_string()]))?;
        Ok(EventBody::Relabel {
            family_id: state.family.family_id.clone(),
            group_id: group_id.to_string(),
            variant_id,
            text,
            label: label.to_string(),
            predicted,
        })
    }

    /// A new-dialect payload with a freshly minted label id.
    pub fn new_dialect(state: &FamilyState, name: &str, group_id: &str, text: &str) -> Result<Self, StoreError> {
        let name = normalize(name);
        if name.is_empty() {
            return Err(StoreError::InvalidPayload("dialect name is empty".into()));
        }
        if state.label_by_name(&name).is_some() {
            return Err(StoreError::DuplicateDialectName(name));
        }
        let group = state
            .groups
            .get(group_id)
            .ok_or_else(|| StoreError::UnknownGroup(group_id.to_string()))?;
        let text = normalize(text);
        if text.is_empty() {
            return Err(StoreError::EmptyText);
        }
        Ok(EventBody::NewDialect {
            family_id: state.family.family_id.clone(),
            label_id: state.mint_label_id(&name),
            name,
            group_id: group_id.to_string(),
            variant_id: state.next_variant_id(group),
            text,
        })
    }

    /// Whether this event adds a user rewrite to the corpus.
    pub fn is_contribution(&self) -> bool {
        matches!(
            self,
            EventBody::Confirm { .. } | EventBody::Relabel { .. } | EventBody::NewDialect { .. }
        )
    }

    /// Check the payload against the family state. On success `apply`
    /// cannot fail.
    pub(crate) fn validate(&self, state: &FamilyState) -> Result<(), StoreError> {
        let invalid = |m: String| Err(StoreError::InvalidPayload(m));
        if self.family_id() != state.family.family_id {
            return invalid(format!("payload family {} does not match", self.family_id()));
        }
        let foreign = |label: &str| -> Result<(), StoreError> {
            match state.labels.get(label) {
                Some(_) => Ok(()),
                None => Err(StoreError::InvalidPayload(format!(
                    "label {label} is not registered in family {}",
                    state.family.family_id
                ))),
            }
        };
        let check_variant_id = |group_id: &str, text: &str, labels: &BTreeSet<String>, claimed: &str| {
            let (expected, _) = state.plan_variant(group_id, text, labels)?;
            if expected != claimed {
                return Err(StoreError::InvalidPayload(format!(
                    "variant id {claimed} does not match expected {expected}"
                )));
            }
            Ok(())
        };
        match self {
            EventBody::Confirm { group_id, variant_id, text, labels, .. } => {
                for l in labels {
                    foreign(l)?;
                }
                check_variant_id(group_id, text, labels, variant_id)
            }
            EventBody::Relabel { group_id, variant_id, text, label, .. } => {
                foreign(label)?;
                check_variant_id(group_id, text, &BTreeSet::from([label.clone()]), variant_id)
            }
            EventBody::NewDialect { label_id, name, group_id, variant_id, text, .. } => {
                if normalize(name).is_empty() {
                    return invalid("dialect name is empty".into());
                }
                if state.label_by_name(name).is_some() {
                    return Err(StoreError::DuplicateDialectName(normalize(name)));
                }
                if state.labels.contains_key(label_id) {
                    return invalid(format!("label id {label_id} already exists"));
                }
                let group = state
                    .groups
                    .get(group_id)
                    .ok_or_else(|| StoreError::UnknownGroup(group_id.clone()))?;
                if normalize(text).is_empty() {
                    return Err(StoreError::EmptyText);
                }
                let expected = state.next_variant_id(group);
                if &expected != variant_id {
                    return invalid(format!("variant id {variant_id} does not match expected {expected}"));
                }
                Ok(())
            }
            EventBody::GeoEdit { label_id, add, remove, .. } => {
                foreign(label_id)?;
                let label = &state.labels[label_id];
                edit_region(&label.region(), add, remove, &state.family)?;
                Ok(())
            }
            EventBody::MatchCorrection { variant_id, divisions, .. } => {
                if state.find_variant(variant_id).is_none() {
                    return Err(StoreError::UnknownVariant(variant_id.clone()));
                }
                for d in divisions {
                    if !state.divisions.iter().any(|x| &x.division_id == d) {
                        return Err(StoreError::Geo(crate::geo::GeoError::UnknownDivision(d.clone())));
                    }
                }
                Ok(())
            }
        }
    }

    pub(crate) fn apply(
        &self,
        state: &mut FamilyState,
        at: DateTime<Utc>,
    ) -> Result<Option<super::AddOutcome>, StoreError> {
        match self {
            EventBody::Confirm { group_id, text, labels, .. } => state
                .add_variant(group_id, text, labels.clone(), Provenance::User, at)
                .map(Some),
            EventBody::Relabel { group_id, text, label, .. } => state
                .add_variant(group_id, text, BTreeSet::from([label.clone()]), Provenance::User, at)
                .map(Some),
            EventBody::NewDialect { family_id, label_id, name, group_id, text, .. } => {
                state.labels.insert(
                    label_id.clone(),
                    super::DialectLabel::new(label_id.clone(), normalize(name), family_id.clone(), BTreeSet::new()),
                );
                state
                    .add_variant(group_id, text, BTreeSet::from([label_id.clone()]), Provenance::User, at)
                    .map(Some)
            }
            EventBody::GeoEdit { label_id, add, remove, .. } => {
                let label = state
                    .labels
                    .get(label_id)
                    .ok_or_else(|| StoreError::UnknownLabel(label_id.clone()))?;
                let region = edit_region(&label.region(), add, remove, &state.family)?;
                state.labels.get_mut(label_id).unwrap().set_region(region.cells);
                Ok(None)
            }
            EventBody::MatchCorrection { .. } => Ok(None),
        }
    }
}

/// An event as submitted, before the store assigns id and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub session_id: String,
    pub body: EventBody,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub body: EventBody,
    pub created_at: DateTime<Utc>,
}

impl FeedbackEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}
