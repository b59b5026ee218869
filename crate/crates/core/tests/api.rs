//! HTTP surface, driven in-process through the router. Every response body
//! is checked against the JSON schemas in `schemas/`.

mod common;

use std::time::{Duration, Instant};

use common::{assert_error, conforms, inline_engine, memory_store, Api};
use dialingle::synth::SyntheticFamily;
use serde_json::{json, Value};

fn tri_api() -> (Api, SyntheticFamily) {
    let fam = SyntheticFamily::tri(60, 3);
    let api = Api::new(inline_engine(memory_store(&[&fam])), false);
    (api, fam)
}

fn start(api: &mut Api, familiar: bool) -> String {
    let (status, body) = api.post("/api/sessions", json!({"family_id": "tri", "familiar": familiar, "seed": 7}));
    assert_eq!(status, 201, "{body}");
    conforms("session", &body);
    body["session_id"].as_str().unwrap().to_string()
}

fn own_rewrite(fam: &SyntheticFamily, label: &str, standard: &str, seed: u64) -> String {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    fam.speaker(label).unwrap().rewrite(standard, &mut rng)
}

#[test]
fn families_list_pins_and_direction() {
    let tri = SyntheticFamily::tri(10, 1);
    let duo = SyntheticFamily::duo(10, 1);
    let mut api = Api::new(inline_engine(memory_store(&[&tri, &duo])), false);
    let (status, body) = api.get("/api/families");
    assert_eq!(status, 200);
    conforms("families", &body);
    let dirs: Vec<(&str, &str)> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["family_id"].as_str().unwrap(), f["writing_direction"].as_str().unwrap()))
        .collect();
    assert!(dirs.contains(&("tri", "LTR")));
    assert!(dirs.contains(&("duo", "RTL")));

    let (_, dialects) = api.get("/api/families/duo/dialects");
    conforms("dialects", &dialects);
    assert_eq!(dialects.as_array().unwrap().len(), 2);
    let (_, divisions) = api.get("/api/families/duo/divisions");
    conforms("divisions", &divisions);
    assert_eq!(divisions["divisions"].as_array().unwrap().len(), 4);
}

#[test]
fn quiz_loop_confirm() {
    let (mut api, fam) = tri_api();
    let sid = start(&mut api, true);

    let (status, prompt) = api.get(&format!("/api/sessions/{sid}/quiz"));
    assert_eq!(status, 200, "{prompt}");
    conforms("quiz-prompt", &prompt);
    assert_eq!(prompt["tier"], "EASY");

    let text = own_rewrite(&fam, "tri-north", prompt["standard_text"].as_str().unwrap(), 1);
    let (status, result) = api.post(&format!("/api/sessions/{sid}/quiz/submit"), json!({ "text": text }));
    assert_eq!(status, 200, "{result}");
    conforms("submit-result", &result);
    let probs = result["prediction"]["probs"].as_object().unwrap();
    let total: f64 = probs.values().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(!result["region_payloads"].as_array().unwrap().is_empty());

    let (_, session) = api.get(&format!("/api/sessions/{sid}"));
    conforms("session", &session);
    assert_eq!(session["stage"], "REVIEW");

    let before = api.engine.stats("tri").unwrap().variants;
    let (status, review) = api.post(&format!("/api/sessions/{sid}/review"), json!({"decision": "confirm"}));
    assert_eq!(status, 200, "{review}");
    conforms("review-result", &review);
    assert_eq!(review["new_level"], "NORMAL");
    assert_eq!(api.engine.stats("tri").unwrap().variants, before + 1);

    let (_, session) = api.get(&format!("/api/sessions/{sid}"));
    assert_eq!(session["stage"], "QUIZ");
    assert_eq!(session["level"], "NORMAL");
    assert_eq!(session["rounds_played"], 1);

    for event in api.engine.store().events() {
        conforms("feedback-event", &serde_json::to_value(&event).unwrap());
    }
}

#[test]
fn correction_with_new_dialect_and_geo_edit() {
    let (mut api, _) = tri_api();
    let sid = start(&mut api, true);
    api.get(&format!("/api/sessions/{sid}/quiz"));
    api.post(&format!("/api/sessions/{sid}/quiz/submit"), json!({"text": "zzq qqz zqz"}));

    let (status, review) = api.post(
        &format!("/api/sessions/{sid}/review"),
        json!({"decision": {"new_dialect": "Upper Vale"}, "geo_edit": {"add": ["0:0", "1:0"]}}),
    );
    assert_eq!(status, 200, "{review}");
    conforms("review-result", &review);
    assert_eq!(review["new_level"], "EASY");
    assert_eq!(review["event_ids"].as_array().unwrap().len(), 2);
    let label = review["label_id"].as_str().unwrap().to_string();

    let (_, dialects) = api.get("/api/families/tri/dialects");
    let new = dialects.as_array().unwrap().iter().find(|d| d["label_id"] == label.as_str()).unwrap();
    assert_eq!(new["cells"], json!(["0:0", "1:0"]));
    // Two adjacent hexagons share one edge: a single ring of 10 corners.
    assert_eq!(new["rings"].as_array().unwrap().len(), 1);

    // Same name again is refused before anything is written.
    let events = api.engine.store().last_event_id();
    api.get(&format!("/api/sessions/{sid}/quiz"));
    api.post(&format!("/api/sessions/{sid}/quiz/submit"), json!({"text": "zzq"}));
    let resp = api.post(&format!("/api/sessions/{sid}/review"), json!({"decision": {"new_dialect": "Upper Vale"}}));
    assert_error(&resp, 400, "duplicate_dialect_name");
    let resp = api.post(&format!("/api/sessions/{sid}/review"), json!({"decision": {"label": "tri-nowhere"}}));
    assert_error(&resp, 404, "unknown_label");
    assert_eq!(api.engine.store().last_event_id(), events);

    let (status, review) = api.post(&format!("/api/sessions/{sid}/review"), json!({"decision": {"label": "tri-lake"}}));
    assert_eq!(status, 200, "{review}");
    assert_eq!(review["label_id"], "tri-lake");
}

#[test]
fn error_contract() {
    let (mut api, _) = tri_api();
    assert_error(&api.post("/api/sessions", json!({"family_id": "nope", "familiar": true})), 404, "unknown_family");
    assert_error(&api.get("/api/sessions/0000/quiz"), 404, "unknown_session");
    assert_error(&api.post("/api/sessions", json!({"family": "tri"})), 400, "invalid_input");

    let quiz = start(&mut api, true);
    api.get(&format!("/api/sessions/{quiz}/quiz"));
    let resp = api.post(&format!("/api/sessions/{quiz}/quiz/submit"), json!({"text": "   "}));
    assert_error(&resp, 400, "empty_text");
    assert_error(&api.get(&format!("/api/sessions/{quiz}/quiz")), 409, "turn_already_open");

    let matcher = start(&mut api, false);
    let resp = api.post(&format!("/api/sessions/{matcher}/review"), json!({"decision": "confirm"}));
    assert_error(&resp, 409, "wrong_stage");
    assert_error(&api.get(&format!("/api/sessions/{matcher}/quiz")), 409, "wrong_stage");
    assert_error(&api.post(&format!("/api/sessions/{matcher}/match/0"), json!({"divisions": []})), 409, "no_open_round");

    assert_error(&api.get("/api/families/tri/suggest?prefix="), 400, "invalid_input");
    assert_error(&api.get("/api/admin/jobs/99"), 404, "unknown_job");
    assert_error(&api.post("/api/admin/evaluate", json!({"family_id": "tri", "items": []})), 400, "invalid_input");
}

#[test]
fn difficulty_switch_and_suggestions() {
    let (mut api, _) = tri_api();
    let sid = start(&mut api, true);
    let (status, view) = api.post(&format!("/api/sessions/{sid}/difficulty"), json!({"tier": "HARD"}));
    assert_eq!(status, 200, "{view}");
    conforms("session", &view);
    let (_, prompt) = api.get(&format!("/api/sessions/{sid}/quiz"));
    assert_eq!(prompt["tier"], "HARD");
    assert_error(&api.post(&format!("/api/sessions/{sid}/difficulty"), json!({"tier": "EASY"})), 409, "turn_already_open");
    assert_error(&api.post(&format!("/api/sessions/{sid}/difficulty"), json!({"tier": "MEDIUM"})), 400, "invalid_input");

    let (status, words) = api.get("/api/families/tri/suggest?prefix=t");
    assert_eq!(status, 200);
    conforms("suggestions", &words);
    let words = words["words"].as_array().unwrap();
    assert!(!words.is_empty());
    assert!(words.iter().all(|w| w.as_str().unwrap().starts_with('t')));
}

#[test]
fn match_round_and_correction() {
    let (mut api, _) = tri_api();
    let sid = start(&mut api, false);
    let (status, round) = api.get(&format!("/api/sessions/{sid}/match"));
    assert_eq!(status, 200, "{round}");
    conforms("match-round", &round);
    assert!(round["items"].as_array().unwrap().iter().all(|i| i["reference_divisions"].is_null()));
    // Asking again returns the same open round.
    assert_eq!(api.get(&format!("/api/sessions/{sid}/match")).1, round);

    assert_error(
        &api.post(&format!("/api/sessions/{sid}/match/0/correction"), json!({"divisions": ["tri-r1c1"]})),
        400,
        "invalid_input",
    );
    assert_error(&api.post(&format!("/api/sessions/{sid}/match/0"), json!({"divisions": ["tri-r9c1"]})), 404, "unknown_division");

    let mut complete = false;
    for index in 0..3 {
        let (status, answer) = api.post(&format!("/api/sessions/{sid}/match/{index}"), json!({"divisions": ["tri-r1c1"]}));
        assert_eq!(status, 200, "{answer}");
        conforms("match-answer", &answer);
        let score = answer["score"].as_f64().unwrap();
        let reference: Vec<&str> = answer["reference_divisions"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let expected = if reference.contains(&"tri-r1c1") { 1.0 / reference.len() as f64 } else { 0.0 };
        assert!((score - expected).abs() < 1e-12);
        complete = answer["round_complete"].as_bool().unwrap();
    }
    assert!(complete);
    assert_error(&api.post(&format!("/api/sessions/{sid}/match/1"), json!({"divisions": []})), 409, "no_open_round");

    let (status, ev) = api.post(&format!("/api/sessions/{sid}/match/1/correction"), json!({"divisions": ["tri-r1c2"]}));
    assert_eq!(status, 201, "{ev}");
    let last = api.engine.store().events().pop().unwrap();
    assert_eq!(last.event_id, ev["event_id"].as_u64().unwrap());
    conforms("feedback-event", &serde_json::to_value(&last).unwrap());

    let (_, session) = api.get(&format!("/api/sessions/{sid}"));
    assert_eq!(session["rounds_played"], 1);
    let (_, round) = api.get(&format!("/api/sessions/{sid}/match"));
    assert!(round["items"].as_array().unwrap().iter().all(|i| i["answer"].is_null()));
}

#[test]
fn admin_retrain_versions_and_reports() {
    let (mut api, fam) = tri_api();
    let (status, first) = api.post("/api/admin/retrain", json!({"family_id": "tri"}));
    assert_eq!(status, 200, "{first}");
    conforms("retrain-outcome", &first);
    let (_, second) = api.post("/api/admin/retrain", json!({"family_id": "tri"}));
    assert_eq!(second["model_version"].as_u64().unwrap(), first["model_version"].as_u64().unwrap() + 1);

    let (status, report) = api.get("/api/admin/difficulty/tri");
    assert_eq!(status, 200);
    conforms("difficulty-report", &report);
    assert_eq!(report["records"].as_array().unwrap().len(), 60);
    assert_eq!(report["counts"], json!({"EASY": 12, "NORMAL": 36, "HARD": 12}));
    assert_eq!(report["model_version"], second["model_version"]);

    let (_, stats) = api.get("/api/admin/stats/tri");
    conforms("stats", &stats);
    assert_eq!(stats["groups"], 60);

    let items: Vec<Value> = fam.holdout(10, 5).into_iter().map(|t| json!({"text": t.text, "labels": t.labels})).collect();
    let (status, eval) = api.post("/api/admin/evaluate", json!({"family_id": "tri", "items": items}));
    assert_eq!(status, 200, "{eval}");
    conforms("eval-report", &eval);
    assert!(eval["micro_f1"].as_f64().unwrap() > 0.9);
}

#[test]
fn concurrent_retrain_is_refused() {
    let (mut api, _) = tri_api();
    let slot = api.engine.claim_training("tri").unwrap();
    assert!(api.engine.is_retraining("tri"));
    assert_error(&api.post("/api/admin/retrain", json!({"family_id": "tri"})), 409, "retrain_in_progress");
    drop(slot);
    let (status, _) = api.post("/api/admin/retrain", json!({"family_id": "tri"}));
    assert_eq!(status, 200);
}

#[test]
fn async_retrain_job_polling() {
    let fam = SyntheticFamily::tri(60, 3);
    let mut api = Api::new(inline_engine(memory_store(&[&fam])), true);
    let (status, accepted) = api.post("/api/admin/retrain", json!({"family_id": "tri"}));
    assert_eq!(status, 202, "{accepted}");
    conforms("job-accepted", &accepted);
    let job = accepted["job_id"].as_u64().unwrap();

    let deadline = Instant::now() + Duration::from_secs(60);
    let done = loop {
        let (status, body) = api.get(&format!("/api/admin/jobs/{job}"));
        assert_eq!(status, 200);
        conforms("job-status", &body);
        if body["state"] != "running" {
            break body;
        }
        assert!(Instant::now() < deadline, "job never finished");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(done["state"], "done", "{done}");
    conforms("retrain-outcome", &done["outcome"]);
    assert_eq!(api.engine.model_version("tri").unwrap(), done["outcome"]["model_version"].as_u64().unwrap());
}

#[test]
fn ended_session_is_gone() {
    let (mut api, _) = tri_api();
    let sid = start(&mut api, true);
    let (status, view) = api.delete(&format!("/api/sessions/{sid}"));
    assert_eq!(status, 200);
    assert_eq!(view["stage"], "DONE");
    assert_error(&api.get(&format!("/api/sessions/{sid}")), 404, "unknown_session");
}

#[test]
fn file_formats_match_schemas() {
    let dir = tempfile::tempdir().unwrap();
    for fam in [SyntheticFamily::tri(5, 2), SyntheticFamily::duo(5, 2)] {
        let files = fam.write_to(dir.path()).unwrap();
        let read = |p: &std::path::Path| std::fs::read_to_string(p).unwrap();
        conforms("registry", &serde_json::from_str(&read(&files.registry)).unwrap());
        conforms("divisions", &serde_json::from_str(&read(&files.divisions)).unwrap());
        for line in read(&files.corpus).lines() {
            conforms("corpus-record", &serde_json::from_str(line).unwrap());
        }
    }
}
