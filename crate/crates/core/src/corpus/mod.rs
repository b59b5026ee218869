//! Dialect registry, parallel-sentence corpus, and the append-only feedback
//! log they are rebuilt from.

mod events;
mod state;
mod store;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, HexCell, HexRegion};

pub use events::{EventBody, EventKind, FeedbackEvent, NewEvent};
pub use state::{AddOutcome, CorpusView, FamilyState};
pub use store::{Recorded, Store};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("duplicate group {0}")]
    DuplicateGroup(String),
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("unknown family {0}")]
    UnknownFamily(String),
    #[error("family {0} is already registered with a different registry")]
    DuplicateFamily(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown variant {0}")]
    UnknownVariant(String),
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("a dialect named {0:?} already exists in this family")]
    DuplicateDialectName(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("event log is corrupt at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// `(lon_min, lat_min, lon_max, lat_max)` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl BoundingBox {
    pub const fn new(lon_min: f64, lat_min: f64, lon_max: f64, lat_max: f64) -> Self {
        Self { lon_min, lat_min, lon_max, lat_max }
    }

    pub fn is_well_formed(&self) -> bool {
        self.lon_min < self.lon_max && self.lat_min < self.lat_max
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        (self.lon_min..=self.lon_max).contains(&lon) && (self.lat_min..=self.lat_max).contains(&lat)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.lon_min + self.lon_max) / 2.0, (self.lat_min + self.lat_max) / 2.0)
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.lon_min, b.lat_min, b.lon_max, b.lat_max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WritingDirection {
    #[default]
    #[serde(rename = "LTR")]
    Ltr,
    #[serde(rename = "RTL")]
    Rtl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageFamily {
    pub family_id: String,
    pub display_name: String,
    pub bounding_box: BoundingBox,
    /// Hexagon circumradius in degrees.
    pub hex_resolution: f64,
    #[serde(default)]
    pub admin_divisions: Vec<String>,
    #[serde(default)]
    pub writing_direction: WritingDirection,
}

impl LanguageFamily {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.family_id.trim().is_empty() {
            return Err(StoreError::InvalidRegistry("empty family_id".into()));
        }
        if !self.bounding_box.is_well_formed() {
            return Err(StoreError::InvalidRegistry("bounding box min must be below max".into()));
        }
        if self.hex_resolution.is_nan() || self.hex_resolution <= 0.0 {
            return Err(StoreError::InvalidRegistry("hex_resolution must be positive".into()));
        }
        Ok(())
    }
}

/// A dialect. Name and affiliation are fixed at creation; only the region
/// can change, and only through geo edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectLabel {
    label_id: String,
    name: String,
    affiliation: String,
    region: BTreeSet<HexCell>,
}

impl DialectLabel {
    pub fn new(
        label_id: impl Into<String>,
        name: impl Into<String>,
        affiliation: impl Into<String>,
        region: BTreeSet<HexCell>,
    ) -> Self {
        Self {
            label_id: label_id.into(),
            name: name.into(),
            affiliation: affiliation.into(),
            region,
        }
    }

    pub fn label_id(&self) -> &str {
        &self.label_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn affiliation(&self) -> &str {
        &self.affiliation
    }

    pub fn cells(&self) -> &BTreeSet<HexCell> {
        &self.region
    }

    pub fn region(&self) -> HexRegion {
        HexRegion {
            family_id: self.affiliation.clone(),
            cells: self.region.clone(),
        }
    }

    pub(crate) fn set_region(&mut self, cells: BTreeSet<HexCell>) {
        self.region = cells;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Seed,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectVariant {
    pub variant_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
    pub provenance: Provenance,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelGroup {
    pub group_id: String,
    pub family_id: String,
    pub standard_text: String,
    pub variants: Vec<DialectVariant>,
}

impl ParallelGroup {
    /// Labels occurring in this group's variants.
    pub fn observed_labels(&self) -> BTreeSet<&str> {
        self.variants
            .iter()
            .flat_map(|v| v.labels.iter().map(String::as_str))
            .collect()
    }

    /// Variants carrying `label`.
    pub fn variants_with<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a DialectVariant> + 'a {
        self.variants.iter().filter(move |v| v.labels.contains(label))
    }
}

/// On-disk registry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryFile {
    pub family: LanguageFamily,
    pub labels: Vec<DialectLabel>,
}

/// One line of the corpus ingest format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub group_id: String,
    pub standard: String,
    pub variants: Vec<VariantRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub text: String,
    pub labels: Vec<String>,
}
