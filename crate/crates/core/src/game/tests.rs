use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::corpus::Store;
use crate::geo::HexCell;
use crate::synth::SyntheticFamily;
use crate::text::ManualClock;

fn engine_with(fam: &SyntheticFamily, config: EngineConfig) -> Engine {
    let store = Arc::new(Store::in_memory(Arc::new(ManualClock::fixed())));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone())).unwrap();
    let mut buf = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut buf, r).unwrap();
        buf.push(b'\n');
    }
    store.ingest_reader(&buf[..], fam.family_id()).unwrap();
    Engine::new(store, config)
}

fn quick() -> EngineConfig {
    EngineConfig {
        retrain_mode: RetrainMode::Manual,
        training: Training::Fixed(crate::classifier::ModelConfig::minimal(1)),
        seed: Some(7),
        ..EngineConfig::default()
    }
}

fn tri_engine() -> (SyntheticFamily, Engine) {
    let fam = SyntheticFamily::tri(30, 2);
    let engine = engine_with(&fam, quick());
    (fam, engine)
}

#[test]
fn start_paths() {
    let (_, e) = tri_engine();
    let q = e.start_session("tri", true, None).unwrap();
    assert_eq!((q.path, q.stage, q.level), (GamePath::Quiz, Stage::Quiz, Tier::Easy));
    let m = e.start_session("tri", false, None).unwrap();
    assert_eq!((m.path, m.stage), (GamePath::Match, Stage::Match));
    assert!(matches!(e.start_session("nope", true, None), Err(GameError::UnknownFamily(_))));
}

#[test]
fn quiz_confirm_raises_level_and_grows_corpus() {
    let (fam, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    let before = e.store().snapshot("tri").unwrap().contributions();
    let prompt = e.begin_quiz_turn(&s).unwrap();
    assert_eq!(prompt.tier, Tier::Easy);
    assert!(prompt.suggestion_seed_words.len() <= 20);
    assert!(matches!(e.begin_quiz_turn(&s), Err(GameError::TurnAlreadyOpen)));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let text = fam.speakers[0].rewrite(&prompt.standard_text, &mut rng);
    let res = e.submit_rewrite(&s, &text).unwrap();
    assert!(!res.predicted_labels.is_empty());
    assert_eq!(res.region_payloads.len(), res.predicted_labels.len());
    assert_eq!(e.session(&s).unwrap().stage, Stage::Review);
    let r = e.review_confirm(&s).unwrap();
    assert_eq!(r.new_level, Tier::Normal);
    assert_eq!(e.store().snapshot("tri").unwrap().contributions(), before + 1);
    e.begin_quiz_turn(&s).unwrap();
    e.submit_rewrite(&s, "x").unwrap();
    assert_eq!(e.review_confirm(&s).unwrap().new_level, Tier::Hard);
    e.begin_quiz_turn(&s).unwrap();
    e.submit_rewrite(&s, "y").unwrap();
    assert_eq!(e.review_confirm(&s).unwrap().new_level, Tier::Hard);
}

use rand::SeedableRng;

#[test]
fn empty_text_and_stage_errors() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    assert!(matches!(e.submit_rewrite(&s, "x"), Err(GameError::NoOpenTurn)));
    assert!(matches!(e.review_confirm(&s), Err(GameError::WrongStage { actual: Stage::Quiz })));
    e.begin_quiz_turn(&s).unwrap();
    assert!(matches!(e.submit_rewrite(&s, "  \t "), Err(GameError::EmptyText)));
    assert!(matches!(e.set_difficulty(&s, Tier::Hard), Err(GameError::TurnAlreadyOpen)));
    let m = e.start_session("tri", false, None).unwrap().session_id;
    assert!(matches!(e.review_confirm(&m), Err(GameError::WrongStage { actual: Stage::Match })));
    assert!(matches!(e.begin_quiz_turn(&m), Err(GameError::WrongStage { .. })));
}

#[test]
fn set_difficulty_steers_sampling() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    e.set_difficulty(&s, Tier::Hard).unwrap();
    e.set_difficulty(&s, Tier::Hard).unwrap();
    let p = e.begin_quiz_turn(&s).unwrap();
    assert_eq!(p.tier, Tier::Hard);
    assert_eq!(e.tier_table("tri").unwrap().tier_of(&p.group_id), Some(Tier::Hard));
}

#[test]
fn correction_keeps_level_and_new_dialect_gets_region() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    e.begin_quiz_turn(&s).unwrap();
    e.submit_rewrite(&s, "völlig anders").unwrap();
    let r = e.review_correct(&s, Correction::Label("tri-lake".into()), None).unwrap();
    assert_eq!(r.new_level, Tier::Easy);
    assert_eq!(r.label_id.as_deref(), Some("tri-lake"));

    e.begin_quiz_turn(&s).unwrap();
    e.submit_rewrite(&s, "ganz neu").unwrap();
    assert!(matches!(
        e.review_correct(&s, Correction::NewDialect("north".into()), None),
        Err(GameError::DuplicateDialectName(_))
    ));
    let far = HexCell { q: 10_000, r: 0 };
    let bad = GeoEditRequest { add: BTreeSet::from([far]), ..Default::default() };
    assert!(matches!(
        e.review_correct(&s, Correction::NewDialect("Valley".into()), Some(bad)),
        Err(GameError::OutOfBounds(_))
    ));
    // Nothing was written by the failed attempts.
    assert_eq!(e.store().events().len(), 1);
    let add = BTreeSet::from([HexCell { q: 1, r: 1 }, HexCell { q: 2, r: 1 }]);
    let ok = GeoEditRequest { add: add.clone(), ..Default::default() };
    let r = e.review_correct(&s, Correction::NewDialect("Valley".into()), Some(ok)).unwrap();
    assert_eq!(r.event_ids.len(), 2);
    let id = r.label_id.unwrap();
    assert_eq!(id, "tri-valley");
    let view = e.store().snapshot("tri").unwrap();
    let label = &view.labels()[&id];
    assert_eq!(label.cells(), &add);
    assert_eq!(label.affiliation(), "tri");
    assert_eq!(e.session(&s).unwrap().level, Tier::Easy);
}

#[test]
fn new_dialect_triggers_retrain_under_inline_policy() {
    let fam = SyntheticFamily::tri(30, 2);
    let e = engine_with(&fam, EngineConfig { retrain_mode: RetrainMode::Inline, ..quick() });
    let s = e.start_session("tri", true, None).unwrap().session_id;
    let v0 = e.model_version("tri").unwrap();
    e.begin_quiz_turn(&s).unwrap();
    e.submit_rewrite(&s, "qqq zzz").unwrap();
    let r = e.review_correct(&s, Correction::NewDialect("Marsh".into()), None).unwrap();
    assert_eq!(r.retrained_to, Some(v0 + 1));
    assert!(e.model("tri").unwrap().label_index().contains(&"tri-marsh".to_string()));
}

#[test]
fn suggestions_rank_by_frequency_then_lexically() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    for text in ["grüezi grüezi gruess", "grüezi grab", "grib"] {
        e.begin_quiz_turn(&s).unwrap();
        e.submit_rewrite(&s, text).unwrap();
        e.review_correct(&s, Correction::Label("tri-north".into()), None).unwrap();
    }
    let got = e.suggest_words("tri", "GR").unwrap();
    let view = e.store().snapshot("tri").unwrap();
    let mut oracle: Vec<(u64, String)> = view
        .word_frequencies()
        .iter()
        .filter(|(w, _)| w.starts_with("gr"))
        .map(|(w, n)| (*n, w.clone()))
        .collect();
    oracle.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let oracle: Vec<String> = oracle.into_iter().take(10).map(|(_, w)| w).collect();
    assert_eq!(got, oracle);
    assert_eq!(got[0], "grüezi");
    assert!(e.suggest_words("tri", "zzzzzz").unwrap().is_empty());
    assert!(matches!(e.suggest_words("tri", " "), Err(GameError::InvalidInput(_))));
    assert!(matches!(e.suggest_words("x", "a"), Err(GameError::UnknownFamily(_))));
}

#[test]
fn match_round_scoring() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", false, Some(3)).unwrap().session_id;
    let round = e.begin_match_round(&s).unwrap();
    assert_eq!(round.items.len(), 3);
    assert!(round.items.iter().all(|i| i.reference_divisions.is_none()));
    let groups: BTreeSet<&str> = round.items.iter().map(|i| i.variant_id.rsplit_once(".v").unwrap().0).collect();
    assert_eq!(groups.len(), 3);
    // Reopening returns the same round.
    assert_eq!(e.begin_match_round(&s).unwrap(), round);

    let first = e.submit_match_answer(&s, 0, BTreeSet::new()).unwrap();
    assert_eq!(first.score, 0.0);
    assert!(matches!(e.submit_match_answer(&s, 0, BTreeSet::new()), Err(GameError::AlreadyAnswered(0))));
    assert!(matches!(
        e.submit_match_answer(&s, 1, BTreeSet::from(["nowhere".to_string()])),
        Err(GameError::UnknownDivision(_))
    ));
    let opened = e.match_round(&s).unwrap().unwrap();
    assert_eq!(opened.items[0].reference_divisions.as_ref(), Some(&first.reference_divisions));
    assert!(opened.items[1].reference_divisions.is_none());

    let s2 = e.start_session("tri", false, Some(3)).unwrap().session_id;
    assert_eq!(e.begin_match_round(&s2).unwrap(), round);
    let reference = first.reference_divisions.clone();
    assert_eq!(e.submit_match_answer(&s2, 0, reference.clone()).unwrap().score, 1.0);

    let ev = e.record_match_correction(&s, 0, BTreeSet::from(["tri-r1c1".to_string()])).unwrap();
    assert_eq!(e.store().events().last().unwrap().event_id, ev);
    e.submit_match_answer(&s, 1, BTreeSet::new()).unwrap();
    assert!(e.submit_match_answer(&s, 2, BTreeSet::new()).unwrap().round_complete);
    assert_eq!(e.session(&s).unwrap().rounds_played, 1);
    assert!(matches!(e.submit_match_answer(&s, 2, BTreeSet::new()), Err(GameError::NoOpenRound)));
}

#[test]
fn match_needs_three_eligible_groups() {
    let fam = SyntheticFamily::tri(2, 2);
    let e = engine_with(&fam, quick());
    let s = e.start_session("tri", false, None).unwrap().session_id;
    assert!(matches!(e.begin_match_round(&s), Err(GameError::InsufficientData)));
}

#[test]
fn jaccard_by_hand() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    assert!((jaccard(&s(&["A", "B"]), &s(&["B", "C"])) - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(jaccard(&s(&["A"]), &s(&["A"])), 1.0);
    assert_eq!(jaccard(&s(&[]), &s(&["A"])), 0.0);
}

#[test]
fn threshold_labels() {
    let dist = crate::classifier::PredictionDistribution {
        probs: [("a", 0.5), ("b", 0.35), ("c", 0.15)].iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    assert_eq!(predicted_labels(&dist, 0.3), vec!["a", "b"]);
    assert_eq!(predicted_labels(&dist, 0.9), vec!["a"]);
}

#[test]
fn retrain_guard_and_versions() {
    let (_, e) = tri_engine();
    let v = e.model_version("tri").unwrap();
    let before = e.difficulty_report("tri").unwrap();
    let out = e.retrain("tri").unwrap();
    assert_eq!(out.model_version, v + 1);
    let after = e.difficulty_report("tri").unwrap();
    let scores = |r: &[crate::selection::DifficultyRecord]| r.iter().map(|x| x.score).collect::<Vec<_>>();
    assert_eq!(scores(&before), scores(&after));

    let _slot = e.claim_training("tri").unwrap();
    assert!(matches!(e.retrain("tri"), Err(GameError::RetrainInProgress(_))));
}

#[test]
fn idle_sessions_expire() {
    let fam = SyntheticFamily::tri(10, 2);
    let clock = Arc::new(ManualClock::fixed());
    let store = Arc::new(Store::in_memory(clock.clone()));
    store.register_family(fam.registry.clone(), None).unwrap();
    let e = Engine::new(store, quick());
    let s = e.start_session("tri", true, None).unwrap().session_id;
    clock.advance_ms(31 * 60 * 1000);
    assert!(matches!(e.session(&s), Err(GameError::UnknownSession(_))));
}

#[test]
fn ended_session_is_gone() {
    let (_, e) = tri_engine();
    let s = e.start_session("tri", true, None).unwrap().session_id;
    assert_eq!(e.end_session(&s).unwrap().stage, Stage::Done);
    assert!(matches!(e.begin_quiz_turn(&s), Err(GameError::UnknownSession(_))));
}
