use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    CorpusRecord, DialectLabel, DialectVariant, LanguageFamily, ParallelGroup, Provenance,
    RegistryFile, StoreError,
};
use crate::geo::AdminDivision;
use crate::text::{normalize, words};

/// Everything the store knows about one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyState {
    pub(crate) family: LanguageFamily,
    pub(crate) labels: BTreeMap<String, DialectLabel>,
    pub(crate) groups: BTreeMap<String, ParallelGroup>,
    #[serde(skip)]
    pub(crate) divisions: Vec<AdminDivision>,
    /// Labels carried by at least one variant.
    pub(crate) observed: BTreeSet<String>,
    /// Accepted user submissions, including ones deduplicated in the view.
    pub(crate) contributions: u64,
    #[serde(skip)]
    pub(crate) word_freq: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddOutcome {
    pub variant_id: String,
    /// False when an identical (text, labels) variant already existed.
    pub added: bool,
    /// Labels seen in the family's variants for the first time.
    pub newly_observed: Vec<String>,
}

impl FamilyState {
    pub fn new(registry: RegistryFile, divisions: Vec<AdminDivision>) -> Result<Self, StoreError> {
        registry.family.validate()?;
        let fid = registry.family.family_id.clone();
        let mut labels = BTreeMap::new();
        for label in registry.labels {
            if label.affiliation() != fid {
                return Err(StoreError::InvalidRegistry(format!(
                    "label {} is affiliated with {}, not {fid}",
                    label.label_id(),
                    label.affiliation()
                )));
            }
            if let Some(c) = label.cells().iter().find(|c| !crate::geo::in_bounds(**c, &registry.family)) {
                return Err(StoreError::Geo(crate::geo::GeoError::OutOfBounds(*c)));
            }
            let id = label.label_id().to_string();
            if labels.insert(id.clone(), label).is_some() {
                return Err(StoreError::InvalidRegistry(format!("duplicate label id {id}")));
            }
        }
        for d in &divisions {
            d.validate()?;
        }
        Ok(Self {
            family: registry.family,
            labels,
            groups: BTreeMap::new(),
            divisions,
            observed: BTreeSet::new(),
            contributions: 0,
            word_freq: BTreeMap::new(),
        })
    }

    pub fn family(&self) -> &LanguageFamily {
        &self.family
    }

    /// Rebuild derived fields after deserialization.
    pub(crate) fn reindex(&mut self, divisions: Vec<AdminDivision>) {
        self.divisions = divisions;
        self.word_freq.clear();
        let texts: Vec<String> = self
            .groups
            .values()
            .flat_map(|g| g.variants.iter().map(|v| v.text.clone()))
            .collect();
        for t in texts {
            self.count_words(&t);
        }
    }

    fn count_words(&mut self, text: &str) {
        for w in words(text) {
            *self.word_freq.entry(w).or_default() += 1;
        }
    }

    pub(crate) fn check_labels<'a>(
        &self,
        labels: impl IntoIterator<Item = &'a String>,
    ) -> Result<(), StoreError> {
        for l in labels {
            if !self.labels.contains_key(l) {
                return Err(StoreError::UnknownLabel(l.clone()));
            }
        }
        Ok(())
    }

    /// Validate a batch of ingest lines without touching state.
    pub(crate) fn validate_records(
        &self,
        records: &[(usize, CorpusRecord)],
    ) -> Result<(), StoreError> {
        let mut seen = BTreeSet::new();
        for (line, rec) in records {
            if rec.group_id.trim().is_empty() {
                return Err(StoreError::MalformedRecord { line: *line, reason: "empty group_id".into() });
            }
            if normalize(&rec.standard).is_empty() {
                return Err(StoreError::MalformedRecord { line: *line, reason: "empty standard text".into() });
            }
            for v in &rec.variants {
                if v.labels.is_empty() {
                    return Err(StoreError::MalformedRecord { line: *line, reason: "variant without labels".into() });
                }
                if normalize(&v.text).is_empty() {
                    return Err(StoreError::MalformedRecord { line: *line, reason: "empty variant text".into() });
                }
                self.check_labels(&v.labels)?;
            }
            if self.groups.contains_key(&rec.group_id) || !seen.insert(rec.group_id.as_str()) {
                return Err(StoreError::DuplicateGroup(rec.group_id.clone()));
            }
        }
        Ok(())
    }

    /// Append pre-validated seed records.
    pub(crate) fn insert_records(&mut self, records: Vec<CorpusRecord>, at: DateTime<Utc>) {
        for rec in records {
            let gid = rec.group_id.clone();
            self.groups.insert(
                gid.clone(),
                ParallelGroup {
                    group_id: gid.clone(),
                    family_id: self.family.family_id.clone(),
                    standard_text: normalize(&rec.standard),
                    variants: Vec::new(),
                },
            );
            for v in rec.variants {
                self.add_variant(&gid, &v.text, v.labels.into_iter().collect(), Provenance::Seed, at)
                    .expect("records are validated before insertion");
            }
        }
    }

    /// Id the next genuinely new variant of `group` will receive.
    pub(crate) fn next_variant_id(&self, group: &ParallelGroup) -> String {
        format!("{}.v{}", group.group_id, group.variants.len() + 1)
    }

    /// Existing variant with the same normalized text and label set.
    pub(crate) fn find_duplicate(
        &self,
        group_id: &str,
        text: &str,
        labels: &BTreeSet<String>,
    ) -> Option<&DialectVariant> {
        self.groups
            .get(group_id)?
            .variants
            .iter()
            .find(|v| v.text == text && &v.labels == labels)
    }

    /// Predict the outcome of `add_variant` without mutating.
    pub(crate) fn plan_variant(
        &self,
        group_id: &str,
        text: &str,
        labels: &BTreeSet<String>,
    ) -> Result<(String, String), StoreError> {
        let group = self
            .groups
            .get(group_id)
            .ok_or_else(|| StoreError::UnknownGroup(group_id.to_string()))?;
        let text = normalize(text);
        if text.is_empty() {
            return Err(StoreError::EmptyText);
        }
        if labels.is_empty() {
            return Err(StoreError::InvalidPayload("variant needs at least one label".into()));
        }
        self.check_labels(labels)?;
        let id = match self.find_duplicate(group_id, &text, labels) {
            Some(v) => v.variant_id.clone(),
            None => self.next_variant_id(group),
        };
        Ok((id, text))
    }

    pub fn add_variant(
        &mut self,
        group_id: &str,
        text: &str,
        labels: BTreeSet<String>,
        provenance: Provenance,
        created_at: DateTime<Utc>,
    ) -> Result<AddOutcome, StoreError> {
        let (variant_id, text) = self.plan_variant(group_id, text, &labels)?;
        if provenance == Provenance::User {
            self.contributions += 1;
        }
        if self.find_duplicate(group_id, &text, &labels).is_some() {
            return Ok(AddOutcome { variant_id, added: false, newly_observed: vec![] });
        }
        let newly_observed: Vec<String> = labels
            .iter()
            .filter(|l| !self.observed.contains(*l))
            .cloned()
            .collect();
        self.observed.extend(labels.iter().cloned());
        self.count_words(&text);
        let group = self.groups.get_mut(group_id).expect("checked by plan_variant");
        group.variants.push(DialectVariant {
            variant_id: variant_id.clone(),
            text,
            labels,
            provenance,
            created_at,
        });
        Ok(AddOutcome { variant_id, added: true, newly_observed })
    }

    pub(crate) fn label_by_name(&self, name: &str) -> Option<&DialectLabel> {
        let folded = normalize(name).to_lowercase();
        self.labels.values().find(|l| l.name().to_lowercase() == folded)
    }

    /// Fresh label id derived from a display name.
    pub(crate) fn mint_label_id(&self, name: &str) -> String {
        let slug: String = normalize(name)
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '-' })
            .collect::<String>()
            .split('-')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("-");
        let base = if slug.is_empty() { "dialect".to_string() } else { slug };
        let base = format!("{}-{}", self.family.family_id, base);
        if !self.labels.contains_key(&base) {
            return base;
        }
        (2..)
            .map(|i| format!("{base}-{i}"))
            .find(|id| !self.labels.contains_key(id))
            .unwrap()
    }

    pub(crate) fn find_variant(&self, variant_id: &str) -> Option<(&ParallelGroup, &DialectVariant)> {
        let (gid, _) = variant_id.rsplit_once(".v")?;
        let g = self.groups.get(gid)?;
        g.variants.iter().find(|v| v.variant_id == variant_id).map(|v| (g, v))
    }
}

/// Immutable view of one family at a point in the log.
#[derive(Debug, Clone)]
pub struct CorpusView {
    pub(crate) state: Arc<FamilyState>,
}

#[derive(Serialize)]
struct ViewRepr<'a> {
    family: &'a LanguageFamily,
    labels: &'a BTreeMap<String, DialectLabel>,
    groups: &'a BTreeMap<String, ParallelGroup>,
    label_set: BTreeSet<String>,
    contributions: u64,
}

impl CorpusView {
    pub fn family(&self) -> &LanguageFamily {
        &self.state.family
    }

    pub fn family_id(&self) -> &str {
        &self.state.family.family_id
    }

    pub fn labels(&self) -> &BTreeMap<String, DialectLabel> {
        &self.state.labels
    }

    pub fn groups(&self) -> &BTreeMap<String, ParallelGroup> {
        &self.state.groups
    }

    pub fn group(&self, id: &str) -> Option<&ParallelGroup> {
        self.state.groups.get(id)
    }

    pub fn divisions(&self) -> &[AdminDivision] {
        &self.state.divisions
    }

    /// K: registered labels plus every label seen on a variant.
    pub fn label_set(&self) -> BTreeSet<String> {
        self.state
            .labels
            .keys()
            .chain(self.state.observed.iter())
            .cloned()
            .collect()
    }

    pub fn variant_count(&self) -> usize {
        self.state.groups.values().map(|g| g.variants.len()).sum()
    }

    pub fn contributions(&self) -> u64 {
        self.state.contributions
    }

    pub fn find_variant(&self, variant_id: &str) -> Option<(&ParallelGroup, &DialectVariant)> {
        self.state.find_variant(variant_id)
    }

    /// Word frequencies over all dialect variants (case-folded).
    pub fn word_frequencies(&self) -> &BTreeMap<String, u64> {
        &self.state.word_freq
    }

    /// Canonical serialization; equal states produce equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&ViewRepr {
            family: &self.state.family,
            labels: &self.state.labels,
            groups: &self.state.groups,
            label_set: self.label_set(),
            contributions: self.state.contributions,
        })
        .expect("view serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BoundingBox, VariantRecord, WritingDirection};
    use crate::text::{Clock, ManualClock};

    pub(crate) fn registry(labels: &[&str]) -> RegistryFile {
        RegistryFile {
            family: LanguageFamily {
                family_id: "gsw".into(),
                display_name: "Swiss German".into(),
                bounding_box: BoundingBox::new(5.9, 45.8, 10.5, 47.8),
                hex_resolution: 0.1,
                admin_divisions: vec![],
                writing_direction: WritingDirection::Ltr,
            },
            labels: labels
                .iter()
                .map(|l| DialectLabel::new(*l, l.to_uppercase(), "gsw", BTreeSet::new()))
                .collect(),
        }
    }

    fn record(gid: &str, variants: &[(&str, &[&str])]) -> CorpusRecord {
        CorpusRecord {
            group_id: gid.into(),
            standard: format!("standard {gid}"),
            variants: variants
                .iter()
                .map(|(t, ls)| VariantRecord {
                    text: t.to_string(),
                    labels: ls.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
        }
    }

    fn state() -> FamilyState {
        let mut s = FamilyState::new(registry(&["a", "b", "c"]), vec![]).unwrap();
        let recs = vec![record("g1", &[("hoi zäme", &["a"])]), record("g2", &[])];
        s.validate_records(&recs.iter().cloned().enumerate().collect::<Vec<_>>()).unwrap();
        s.insert_records(recs, ManualClock::fixed().now());
        s
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn unseen_label_joins_observed() {
        let mut s = state();
        let t = ManualClock::fixed().now();
        let out = s.add_variant("g2", "sali", set(&["b"]), Provenance::User, t).unwrap();
        assert!(out.added);
        assert_eq!(out.newly_observed, vec!["b"]);
        assert!(s.groups["g2"].observed_labels().contains("b"));
    }

    #[test]
    fn multi_label_variant_is_in_both_subsets() {
        let mut s = state();
        let t = ManualClock::fixed().now();
        s.add_variant("g2", "grüezi", set(&["a", "b"]), Provenance::User, t).unwrap();
        let g = &s.groups["g2"];
        assert_eq!(g.variants_with("a").count(), 1);
        assert_eq!(g.variants_with("b").count(), 1);
    }

    #[test]
    fn add_variant_errors() {
        let mut s = state();
        let t = ManualClock::fixed().now();
        assert!(matches!(s.add_variant("g1", "   ", set(&["a"]), Provenance::User, t), Err(StoreError::EmptyText)));
        assert!(matches!(s.add_variant("nope", "x", set(&["a"]), Provenance::User, t), Err(StoreError::UnknownGroup(_))));
        assert!(matches!(s.add_variant("g1", "x", set(&["zz"]), Provenance::User, t), Err(StoreError::UnknownLabel(_))));
    }

    #[test]
    fn duplicate_variant_is_idempotent_but_counted() {
        let mut s = state();
        let t = ManualClock::fixed().now();
        let a = s.add_variant("g1", "hoi  zäme ", set(&["a"]), Provenance::User, t).unwrap();
        assert!(!a.added);
        assert_eq!(a.variant_id, "g1.v1");
        assert_eq!(s.groups["g1"].variants.len(), 1);
        assert_eq!(s.contributions, 1);
    }

    #[test]
    fn validation_rejects_bad_batches() {
        let s = state();
        let dup = vec![(1, record("g1", &[]))];
        assert!(matches!(s.validate_records(&dup), Err(StoreError::DuplicateGroup(g)) if g == "g1"));
        let unknown = vec![(1, record("g9", &[("x", &["q"])]))];
        assert!(matches!(s.validate_records(&unknown), Err(StoreError::UnknownLabel(l)) if l == "q"));
        let twice = vec![(1, record("g8", &[])), (2, record("g8", &[]))];
        assert!(matches!(s.validate_records(&twice), Err(StoreError::DuplicateGroup(_))));
    }

    #[test]
    fn label_set_includes_unobserved_registered_labels() {
        let view = CorpusView { state: Arc::new(state()) };
        assert_eq!(view.label_set(), set(&["a", "b", "c"]));
    }

    #[test]
    fn minted_ids_are_unique() {
        let mut s = state();
        let id = s.mint_label_id("Bärndütsch Nord");
        assert_eq!(id, "gsw-bärndütsch-nord");
        s.labels.insert(id.clone(), DialectLabel::new(id.clone(), "x", "gsw", BTreeSet::new()));
        assert_eq!(s.mint_label_id("bärndütsch nord"), "gsw-bärndütsch-nord-2");
    }
}
