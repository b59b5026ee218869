//! Synthetic pseudo-dialect families.
//!
//! Each dialect is a small set of rewrite rules applied to a made-up
//! standard language. Three families ship with the crate:
//!
//! * `tri`: three dialects with disjoint rules; easy to separate.
//! * `octo`: eight dialects drawing on a shared rule pool, each group
//!   covering about half the dialects; a realistic amount of confusion.
//! * `duo`: two right-to-left dialects written in Arabic letters.
//!
//! Everything is a pure function of the seed.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::LabeledText;
use crate::corpus::{
    BoundingBox, CorpusRecord, DialectLabel, LanguageFamily, RegistryFile, VariantRecord, WritingDirection,
};
use crate::geo::{cells_in_lasso, AdminDivision, DivisionFile, Point};

/// One rewrite rule; `p` is applied independently per occurrence.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Replace a substring inside words.
    Sub { from: String, to: String, p: f64 },
    /// Append a suffix to words longer than three letters.
    Suffix { suffix: String, p: f64 },
    /// Insert a particle word at the end of the sentence.
    Particle { word: String, p: f64 },
}

impl Rule {
    fn sub(from: &str, to: &str, p: f64) -> Self {
        Rule::Sub { from: from.into(), to: to.into(), p }
    }

    fn suffix(suffix: &str, p: f64) -> Self {
        Rule::Suffix { suffix: suffix.into(), p }
    }

    fn particle(word: &str, p: f64) -> Self {
        Rule::Particle { word: word.into(), p }
    }
}

/// A simulated native speaker of one dialect.
#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub label_id: String,
    pub rules: Vec<Rule>,
}

impl Speaker {
    /// Rewrite a standard sentence in this speaker's dialect.
    pub fn rewrite(&self, standard: &str, rng: &mut impl Rng) -> String {
        let mut words: Vec<String> = standard.split_whitespace().map(str::to_string).collect();
        for rule in &self.rules {
            match rule {
                Rule::Sub { from, to, p } => {
                    for w in words.iter_mut() {
                        *w = substitute(w, from, to, *p, rng);
                    }
                }
                Rule::Suffix { suffix, p } => {
                    for w in words.iter_mut() {
                        if w.chars().count() > 3 && rng.gen_bool(*p) {
                            w.push_str(suffix);
                        }
                    }
                }
                Rule::Particle { word, p } => {
                    if rng.gen_bool(*p) {
                        words.push(word.clone());
                    }
                }
            }
        }
        words.join(" ")
    }
}

fn substitute(word: &str, from: &str, to: &str, p: f64, rng: &mut impl Rng) -> String {
    let mut out = String::with_capacity(word.len() + 4);
    let mut rest = word;
    while let Some(i) = rest.find(from) {
        out.push_str(&rest[..i]);
        out.push_str(if rng.gen_bool(p) { to } else { from });
        rest = &rest[i + from.len()..];
    }
    out.push_str(rest);
    out
}

/// A generated family: registry, divisions, seed corpus and one speaker per
/// dialect.
#[derive(Debug, Clone)]
pub struct SyntheticFamily {
    pub registry: RegistryFile,
    pub divisions: DivisionFile,
    pub records: Vec<CorpusRecord>,
    pub speakers: Vec<Speaker>,
    lexicon: Lexicon,
    seed: u64,
}

/// Paths written by [`SyntheticFamily::write_to`].
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFiles {
    pub registry: PathBuf,
    pub corpus: PathBuf,
    pub divisions: PathBuf,
}

#[derive(Debug, Clone)]
struct Lexicon {
    onsets: Vec<&'static str>,
    vowels: Vec<&'static str>,
    words: Vec<String>,
}

impl Lexicon {
    fn new(onsets: Vec<&'static str>, vowels: Vec<&'static str>, size: usize, rng: &mut impl Rng) -> Self {
        let mut lex = Lexicon { onsets, vowels, words: Vec::new() };
        let mut seen = BTreeSet::new();
        while lex.words.len() < size {
            let w = lex.word(rng);
            if seen.insert(w.clone()) {
                lex.words.push(w);
            }
        }
        lex
    }

    fn word(&self, rng: &mut impl Rng) -> String {
        let syllables = rng.gen_range(1..=3);
        (0..syllables)
            .map(|_| {
                let o = self.onsets.choose(rng).unwrap();
                let v = self.vowels.choose(rng).unwrap();
                format!("{o}{v}")
            })
            .collect()
    }

    fn sentence(&self, rng: &mut impl Rng) -> String {
        let n = rng.gen_range(5..=9);
        (0..n).map(|_| self.words.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
    }
}

struct Blueprint {
    family_id: &'static str,
    display_name: &'static str,
    bbox: BoundingBox,
    hex_resolution: f64,
    direction: WritingDirection,
    onsets: Vec<&'static str>,
    vowels: Vec<&'static str>,
    dialects: Vec<(&'static str, Vec<Rule>)>,
    division_grid: (usize, usize),
}

impl SyntheticFamily {
    /// Three dialects with disjoint rules and full coverage.
    pub fn tri(groups: usize, seed: u64) -> Self {
        let bp = Blueprint {
            family_id: "tri",
            display_name: "Trialect",
            bbox: BoundingBox::new(5.9, 45.8, 10.5, 47.8),
            hex_resolution: 0.1,
            direction: WritingDirection::Ltr,
            onsets: vec!["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v"],
            vowels: vec!["a", "e", "i", "o", "u"],
            dialects: vec![
                ("North", vec![Rule::sub("o", "ö", 0.9), Rule::sub("u", "ü", 0.9), Rule::particle("gell", 0.5)]),
                ("Lake", vec![Rule::sub("a", "aa", 0.9), Rule::sub("e", "ee", 0.9), Rule::suffix("li", 0.3)]),
                ("Ridge", vec![Rule::sub("s", "sch", 0.9), Rule::sub("t", "tt", 0.9), Rule::particle("woll", 0.5)]),
            ],
            division_grid: (2, 3),
        };
        Self::build(bp, groups, 1.0, seed)
    }

    /// Eight dialects over a shared pool of rules; each group has a variant
    /// for roughly half of them.
    pub fn octo(groups: usize, seed: u64) -> Self {
        let pool = |i: usize| -> Rule {
            match i {
                0 => Rule::sub("a", "ä", 0.6),
                1 => Rule::sub("o", "ou", 0.6),
                2 => Rule::sub("i", "ie", 0.6),
                3 => Rule::sub("k", "ch", 0.6),
                4 => Rule::sub("s", "sch", 0.6),
                5 => Rule::sub("l", "u", 0.5),
                6 => Rule::suffix("li", 0.3),
                7 => Rule::sub("e", "ä", 0.5),
                8 => Rule::sub("u", "ü", 0.6),
                9 => Rule::particle("halt", 0.4),
                10 => Rule::sub("n", "ng", 0.4),
                _ => Rule::suffix("e", 0.3),
            }
        };
        let picks: [(&str, [usize; 3]); 8] = [
            ("Basel", [0, 3, 6]),
            ("Bern", [5, 1, 9]),
            ("Zurich", [0, 4, 10]),
            ("Lucerne", [2, 8, 6]),
            ("St. Gallen", [7, 3, 11]),
            ("Valais", [1, 2, 10]),
            ("Grisons", [4, 8, 11]),
            ("Aargau", [7, 5, 9]),
        ];
        let bp = Blueprint {
            family_id: "octo",
            display_name: "Octolect",
            bbox: BoundingBox::new(5.9, 45.8, 10.5, 47.8),
            hex_resolution: 0.08,
            direction: WritingDirection::Ltr,
            onsets: vec!["b", "d", "g", "k", "l", "m", "n", "r", "s", "t", "w", "z"],
            vowels: vec!["a", "e", "i", "o", "u"],
            dialects: picks.iter().map(|(n, r)| (*n, r.iter().map(|i| pool(*i)).collect())).collect(),
            division_grid: (3, 4),
        };
        Self::build(bp, groups, 0.5, seed)
    }

    /// Two right-to-left dialects.
    pub fn duo(groups: usize, seed: u64) -> Self {
        let bp = Blueprint {
            family_id: "duo",
            display_name: "Duolect",
            bbox: BoundingBox::new(35.0, 29.0, 48.0, 38.0),
            hex_resolution: 0.4,
            direction: WritingDirection::Rtl,
            onsets: vec!["ب", "ت", "د", "ر", "س", "ك", "ل", "م", "ن", "ق"],
            vowels: vec!["ا", "و", "ي", ""],
            dialects: vec![
                ("Coast", vec![Rule::sub("ك", "چ", 0.9), Rule::particle("يعني", 0.5)]),
                ("Steppe", vec![Rule::sub("ق", "گ", 0.9), Rule::sub("ت", "ث", 0.9), Rule::suffix("ش", 0.3)]),
            ],
            division_grid: (2, 2),
        };
        Self::build(bp, groups, 1.0, seed)
    }

    /// Look a bundled family up by id.
    pub fn by_name(name: &str, groups: usize, seed: u64) -> Option<Self> {
        match name {
            "tri" => Some(Self::tri(groups, seed)),
            "octo" => Some(Self::octo(groups, seed)),
            "duo" => Some(Self::duo(groups, seed)),
            _ => None,
        }
    }

    fn build(bp: Blueprint, groups: usize, coverage: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lexicon = Lexicon::new(bp.onsets.clone(), bp.vowels.clone(), 400, &mut rng);
        let family = LanguageFamily {
            family_id: bp.family_id.into(),
            display_name: bp.display_name.into(),
            bounding_box: bp.bbox,
            hex_resolution: bp.hex_resolution,
            admin_divisions: Vec::new(),
            writing_direction: bp.direction,
        };
        let divisions = grid_divisions(&family, bp.division_grid);
        let n = bp.dialects.len();
        let mut labels = Vec::new();
        let mut speakers = Vec::new();
        for (i, (name, rules)) in bp.dialects.into_iter().enumerate() {
            let label_id = format!("{}-{}", bp.family_id, slug(name));
            let center = blob_center(&family, i, n);
            let radius = 0.18 * (bp.bbox.lat_max - bp.bbox.lat_min);
            let cells = cells_in_lasso(&circle(center, radius, 16), &family).expect("circle is not degenerate");
            labels.push(DialectLabel::new(label_id.clone(), name, bp.family_id, cells));
            speakers.push(Speaker { label_id, rules });
        }
        let mut family = family;
        family.admin_divisions = divisions.divisions.iter().map(|d| d.division_id.clone()).collect();
        let mut out = SyntheticFamily {
            registry: RegistryFile { family, labels },
            divisions,
            records: Vec::new(),
            speakers,
            lexicon,
            seed,
        };
        out.records = (0..groups)
            .map(|g| out.record(&format!("{}-g{:04}", bp.family_id, g + 1), coverage, &mut rng))
            .collect();
        out
    }

    fn record(&self, group_id: &str, coverage: f64, rng: &mut ChaCha8Rng) -> CorpusRecord {
        let standard = self.lexicon.sentence(rng);
        let mut variants: Vec<VariantRecord> = Vec::new();
        for sp in &self.speakers {
            if coverage < 1.0 && !rng.gen_bool(coverage) {
                continue;
            }
            let text = sp.rewrite(&standard, rng);
            match variants.iter_mut().find(|v| v.text == text) {
                Some(v) => v.labels.push(sp.label_id.clone()),
                None => variants.push(VariantRecord { text, labels: vec![sp.label_id.clone()] }),
            }
        }
        CorpusRecord { group_id: group_id.into(), standard, variants }
    }

    pub fn family_id(&self) -> &str {
        &self.registry.family.family_id
    }

    pub fn speaker(&self, label_id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.label_id == label_id)
    }

    /// Keep only the first `n` groups of the seed corpus.
    pub fn truncated(mut self, n: usize) -> Self {
        self.records.truncate(n);
        self
    }

    /// Fresh sentences, `per_dialect` rewrites per dialect, never part of
    /// the seed corpus. Deterministic in `seed`.
    pub fn holdout(&self, per_dialect: usize, seed: u64) -> Vec<LabeledText> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.seed.rotate_left(17) ^ 0x401d);
        let mut out = Vec::new();
        for i in 0..per_dialect {
            let standard = self.lexicon.sentence(&mut rng);
            for sp in &self.speakers {
                out.push(LabeledText::new(
                    format!("holdout-{i}-{}", sp.label_id),
                    sp.rewrite(&standard, &mut rng),
                    &[&sp.label_id],
                ));
            }
        }
        out
    }

    /// Write `registry.json`, `corpus.jsonl` and `divisions.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> std::io::Result<FamilyFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let files = FamilyFiles {
            registry: dir.join("registry.json"),
            corpus: dir.join("corpus.jsonl"),
            divisions: dir.join("divisions.json"),
        };
        fs::write(&files.registry, serde_json::to_vec_pretty(&self.registry)?)?;
        fs::write(&files.divisions, serde_json::to_vec_pretty(&self.divisions)?)?;
        let mut f = std::io::BufWriter::new(fs::File::create(&files.corpus)?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(files)
    }
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == ' ')
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("-")
}

/// Dialect centers spread on an ellipse inside the bounding box.
fn blob_center(family: &LanguageFamily, i: usize, n: usize) -> Point {
    let b = family.bounding_box;
    let (cx, cy) = b.center();
    let angle = std::f64::consts::TAU * i as f64 / n as f64;
    (cx + 0.33 * (b.lon_max - b.lon_min) * angle.cos(), cy + 0.3 * (b.lat_max - b.lat_min) * angle.sin())
}

fn circle(center: Point, radius: f64, sides: usize) -> Vec<Point> {
    let mut ring: Vec<Point> = (0..sides)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / sides as f64;
            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

/// Rectangles tiling the bounding box, `rows × cols`.
fn grid_divisions(family: &LanguageFamily, (rows, cols): (usize, usize)) -> DivisionFile {
    let b = family.bounding_box;
    let w = (b.lon_max - b.lon_min) / cols as f64;
    let h = (b.lat_max - b.lat_min) / rows as f64;
    let mut divisions = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (x0, y0) = (b.lon_min + c as f64 * w, b.lat_min + r as f64 * h);
            let (x1, y1) = (x0 + w, y0 + h);
            divisions.push(AdminDivision {
                division_id: format!("{}-r{}c{}", family.family_id, r + 1, c + 1),
                name: format!("Division {}{}", (b'A' + r as u8) as char, c + 1),
                polygon: vec![vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]],
            });
        }
    }
    DivisionFile { divisions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = SyntheticFamily::octo(20, 5);
        let b = SyntheticFamily::octo(20, 5);
        assert_eq!(a.records, b.records);
        assert_eq!(a.holdout(3, 1), b.holdout(3, 1));
        assert_ne!(a.records, SyntheticFamily::octo(20, 6).records);
    }

    #[test]
    fn every_dialect_has_a_region_and_valid_registry() {
        for fam in [SyntheticFamily::tri(5, 0), SyntheticFamily::octo(5, 0), SyntheticFamily::duo(5, 0)] {
            fam.registry.family.validate().unwrap();
            for l in &fam.registry.labels {
                assert!(!l.cells().is_empty(), "{} has no cells", l.label_id());
            }
            for d in &fam.divisions.divisions {
                d.validate().unwrap();
            }
        }
    }

    #[test]
    fn substitution_is_per_occurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(substitute("banana", "a", "ä", 1.0, &mut rng), "bänänä");
        assert_eq!(substitute("banana", "a", "ä", 0.0, &mut rng), "banana");
        assert_eq!(substitute("sass", "ss", "sch", 1.0, &mut rng), "sasch");
    }

    #[test]
    fn tri_covers_all_dialects_per_group() {
        let fam = SyntheticFamily::tri(10, 1);
        for r in &fam.records {
            let labels: BTreeSet<&str> = r.variants.iter().flat_map(|v| v.labels.iter().map(String::as_str)).collect();
            assert_eq!(labels.len(), 3);
        }
    }
}
