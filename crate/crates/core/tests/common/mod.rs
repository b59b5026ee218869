#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use dialingle::api::{router, AppState};
use dialingle::corpus::Store;
use dialingle::game::{Engine, EngineConfig, RetrainMode};
use dialingle::sim::{Method, RouterTransport, Transport};
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;
use serde_json::Value;

pub fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::fixed())
}

pub fn corpus_lines(fam: &SyntheticFamily) -> Vec<u8> {
    let mut lines = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut lines, r).unwrap();
        lines.push(b'\n');
    }
    lines
}

pub fn load(store: &Store, fam: &SyntheticFamily) {
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone())).unwrap();
    store.ingest_reader(&corpus_lines(fam)[..], fam.family_id()).unwrap();
}

pub fn memory_store(fams: &[&SyntheticFamily]) -> Arc<Store> {
    let store = Arc::new(Store::in_memory(clock()));
    for f in fams {
        load(&store, f);
    }
    store
}

pub fn inline_engine(store: Arc<Store>) -> Engine {
    Engine::new(
        store,
        EngineConfig { retrain_mode: RetrainMode::Manual, seed: Some(0), ..EngineConfig::default() },
    )
}

pub struct Api {
    pub engine: Engine,
    pub transport: RouterTransport,
}

impl Api {
    pub fn new(engine: Engine, async_retrain: bool) -> Self {
        let transport = RouterTransport::new(router(AppState { engine: engine.clone(), async_retrain }, &[]));
        Self { engine, transport }
    }

    pub fn call(&mut self, method: Method, path: &str, body: Option<Value>) -> (u16, Value) {
        self.transport.call(method, path, body.as_ref()).unwrap()
    }

    pub fn get(&mut self, path: &str) -> (u16, Value) {
        self.call(Method::Get, path, None)
    }

    pub fn post(&mut self, path: &str, body: Value) -> (u16, Value) {
        self.call(Method::Post, path, Some(body))
    }

    pub fn delete(&mut self, path: &str) -> (u16, Value) {
        self.call(Method::Delete, path, None)
    }
}

pub fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::JSONSchema::compile(&value).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Panics with every violation if `instance` does not match schema `name`.
pub fn conforms(name: &str, instance: &Value) {
    let compiled = schema(name);
    if let Err(errors) = compiled.validate(instance) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{name} schema violated: {msgs:?}\ninstance: {instance:#}");
    };
}

pub fn assert_error(resp: &(u16, Value), status: u16, code: &str) {
    assert_eq!(resp.0, status, "body: {}", resp.1);
    assert_eq!(resp.1["code"], code, "body: {}", resp.1);
    assert_eq!(resp.1["http_status"], status);
    conforms("error", &resp.1);
}

/// Plays quiz and match turns until the store holds at least `n` events,
/// mixing confirms, relabels, new dialects with geo edits and match
/// corrections.
pub fn drive_events(engine: &Engine, family_id: &str, n: u64) {
    use dialingle::game::{Correction, GeoEditRequest};
    let quiz = engine.start_session(family_id, true, Some(1)).unwrap().session_id;
    let matcher = engine.start_session(family_id, false, Some(2)).unwrap().session_id;
    let labels: Vec<String> = engine.store().snapshot(family_id).unwrap().labels().keys().cloned().collect();
    let store = engine.store();
    let mut turn = 0usize;
    while store.last_event_id() < n {
        turn += 1;
        if turn.is_multiple_of(7) {
            let round = engine.begin_match_round(&matcher).unwrap();
            let idx = round.items.iter().position(|i| i.answer.is_none()).unwrap();
            let divs = store.snapshot(family_id).unwrap().divisions()[0].division_id.clone();
            engine.submit_match_answer(&matcher, idx, [divs.clone()].into()).unwrap();
            engine.record_match_correction(&matcher, idx, [divs].into()).unwrap();
            continue;
        }
        let prompt = engine.begin_quiz_turn(&quiz).unwrap();
        engine.submit_rewrite(&quiz, &format!("{} t{turn}", prompt.standard_text)).unwrap();
        match turn % 5 {
            0 => {
                let edit = GeoEditRequest { add: [format!("{}:0", turn % 3).parse().unwrap()].into(), ..Default::default() };
                engine
                    .review_correct(&quiz, Correction::NewDialect(format!("Dialect {turn}")), Some(edit))
                    .unwrap();
            }
            1 | 3 => {
                engine.review_correct(&quiz, Correction::Label(labels[turn % labels.len()].clone()), None).unwrap();
            }
            _ => {
                engine.review_confirm(&quiz).unwrap();
            }
        }
    }
}

/// Predictor answering from a fixed table of distributions, keyed by text.
pub struct TablePredictor {
    pub labels: Vec<String>,
    pub table: std::collections::HashMap<String, Vec<f64>>,
}

impl dialingle::selection::Predictor for TablePredictor {
    fn label_index(&self) -> &[String] {
        &self.labels
    }

    fn predict(&self, text: &str) -> dialingle::classifier::PredictionDistribution {
        let probs = &self.table[text];
        dialingle::classifier::PredictionDistribution {
            probs: self.labels.iter().cloned().zip(probs.iter().copied()).collect(),
        }
    }
}

/// Normalizes non-negative weights into a distribution.
pub fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

pub fn group(group_id: &str, variants: &[(&str, &[&str])]) -> dialingle::corpus::ParallelGroup {
    use dialingle::corpus::{DialectVariant, ParallelGroup, Provenance};
    ParallelGroup {
        group_id: group_id.into(),
        family_id: "f".into(),
        standard_text: "standard".into(),
        variants: variants
            .iter()
            .enumerate()
            .map(|(i, (text, labels))| DialectVariant {
                variant_id: format!("{group_id}.v{}", i + 1),
                text: text.to_string(),
                labels: labels.iter().map(|l| l.to_string()).collect(),
                provenance: Provenance::Seed,
                created_at: chrono::DateTime::UNIX_EPOCH,
            })
            .collect(),
    }
}
