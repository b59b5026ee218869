//! Simulated contributors playing the Quiz through the HTTP API.
//!
//! One simulated speaker per dialect rewrites the offered standard sentence
//! with its dialect's rules. With probability `confirm_accuracy` it answers
//! truthfully: it confirms when the prediction is exactly its own dialect
//! and otherwise corrects to its own dialect. Otherwise it confirms
//! whatever was predicted, which models careless players.
//!
//! The driver only talks JSON over a [`Transport`], so the same loop runs
//! in-process against the router or over the network against a server.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::classifier::LabeledText;
use crate::selection::Tier;
use crate::synth::Speaker;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("server unreachable: {0}")]
    Transport(String),
    #[error("{method} {path} failed with {status} {code}: {message}")]
    Api { method: &'static str, path: String, status: u16, code: String, message: String },
    #[error("unexpected response from {path}: {reason}")]
    Protocol { path: String, reason: String },
    #[error("family {0} is not served")]
    FamilyMissing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Delete,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Delete => "DELETE",
        }
    }
}

/// Sends one JSON request and returns the status and decoded body.
pub trait Transport {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<(u16, Value), SimError>;
}

/// In-process transport: requests go straight into an axum router.
pub struct RouterTransport {
    router: axum::Router,
    runtime: tokio::runtime::Runtime,
}

impl RouterTransport {
    pub fn new(router: axum::Router) -> Self {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        Self { router, runtime }
    }
}

impl Transport for RouterTransport {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<(u16, Value), SimError> {
        use tower::ServiceExt;
        let mut req = axum::http::Request::builder().method(method.as_str()).uri(path);
        let payload = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                axum::body::Body::from(serde_json::to_vec(v).expect("json value serializes"))
            }
            None => axum::body::Body::empty(),
        };
        let req = req.body(payload).map_err(|e| SimError::Transport(e.to_string()))?;
        let router = self.router.clone();
        self.runtime.block_on(async move {
            let resp = router.oneshot(req).await.map_err(|e| SimError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
                .await
                .map_err(|e| SimError::Transport(e.to_string()))?;
            let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
            Ok((status, value))
        })
    }
}

/// Network transport against a running server.
pub struct HttpTransport {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(600))
                .build()
                .expect("http client"),
        }
    }
}

impl Transport for HttpTransport {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<(u16, Value), SimError> {
        let url = format!("{}{}", self.base, path);
        let mut req = match method {
            Method::Get => self.client.get(&url),
            Method::Post => self.client.post(&url),
            Method::Delete => self.client.delete(&url),
        };
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().map_err(|e| SimError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| SimError::Transport(e.to_string()))?;
        Ok((status, if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::Null) }))
    }
}

fn decode<D: for<'de> Deserialize<'de>>(path: &str, v: Value) -> Result<D, SimError> {
    serde_json::from_value(v).map_err(|e| SimError::Protocol { path: path.to_string(), reason: e.to_string() })
}

/// Thin typed client over a transport.
struct Client<'a, T: Transport> {
    t: &'a mut T,
}

impl<T: Transport> Client<'_, T> {
    fn call(&mut self, method: Method, path: &str, body: Option<Value>) -> Result<(u16, Value), SimError> {
        let (status, v) = self.t.call(method, path, body.as_ref())?;
        if status >= 400 {
            let field = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
            return Err(SimError::Api {
                method: method.as_str(),
                path: path.to_string(),
                status,
                code: field("code"),
                message: field("message"),
            });
        }
        Ok((status, v))
    }

    fn get<D: for<'de> Deserialize<'de>>(&mut self, path: &str) -> Result<D, SimError> {
        let (_, v) = self.call(Method::Get, path, None)?;
        decode(path, v)
    }

    fn post<D: for<'de> Deserialize<'de>>(&mut self, path: &str, body: Value) -> Result<D, SimError> {
        let (_, v) = self.call(Method::Post, path, Some(body))?;
        decode(path, v)
    }

    /// Retrain and wait for completion, polling when the server answers 202.
    fn retrain(&mut self, family_id: &str) -> Result<u64, SimError> {
        let path = "/api/admin/retrain";
        let (status, v) = self.call(Method::Post, path, Some(json!({ "family_id": family_id })))?;
        if status != 202 {
            return v["model_version"].as_u64().ok_or_else(|| SimError::Protocol {
                path: path.into(),
                reason: "missing model_version".into(),
            });
        }
        let job = v["job_id"].as_u64().unwrap_or_default();
        loop {
            let status: Value = self.get(&format!("/api/admin/jobs/{job}"))?;
            match status["state"].as_str() {
                Some("running") => std::thread::sleep(Duration::from_millis(50)),
                Some("done") => return Ok(status["outcome"]["model_version"].as_u64().unwrap_or_default()),
                _ => {
                    return Err(SimError::Api {
                        method: "POST",
                        path: path.into(),
                        status: 409,
                        code: status["code"].as_str().unwrap_or("internal").into(),
                        message: status["message"].as_str().unwrap_or_default().into(),
                    })
                }
            }
        }
    }

    fn evaluate(&mut self, family_id: &str, holdout: &[LabeledText]) -> Result<f64, SimError> {
        let items: Vec<Value> = holdout.iter().map(|i| json!({ "text": i.text, "labels": i.labels })).collect();
        let report: Value = self.post("/api/admin/evaluate", json!({ "family_id": family_id, "items": items }))?;
        report["micro_f1"].as_f64().ok_or_else(|| SimError::Protocol {
            path: "/api/admin/evaluate".into(),
            reason: "missing micro_f1".into(),
        })
    }

    fn stats(&mut self, family_id: &str) -> Result<Value, SimError> {
        self.get(&format!("/api/admin/stats/{family_id}"))
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub family_id: String,
    pub rounds: usize,
    pub seed: u64,
    /// Probability that a simulant answers truthfully.
    pub confirm_accuracy: f64,
    pub speakers: Vec<Speaker>,
    /// Labeled sentences for the before/after evaluation.
    pub holdout: Vec<LabeledText>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Confirm,
    Correct,
}

/// One line of the per-round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub speaker: String,
    pub tier: Tier,
    pub group_id: String,
    pub predicted: Vec<String>,
    /// Top-1 prediction equals the speaker's dialect.
    pub correct: bool,
    pub action: Action,
    /// Mean difficulty score over the family after this round.
    #[serde(rename = "D_mean")]
    pub d_mean: f64,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub family_id: String,
    pub rounds: usize,
    pub seed: u64,
    /// Contributions added during the run, as reported by the server.
    pub corpus_growth: u64,
    pub confirms: usize,
    pub corrections: usize,
    pub f1_initial: f64,
    pub f1_final: f64,
    pub model_version_initial: u64,
    pub model_version_final: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub log: Vec<RoundLog>,
    pub summary: SimSummary,
}

impl SimReport {
    /// Growth recomputed from the log alone.
    pub fn growth_from_log(&self) -> u64 {
        self.log.len() as u64
    }
}

/// Play `config.rounds` quiz rounds. The served model is retrained before
/// the first round and after the last one so both F1 values describe a
/// model trained on the corpus of that moment.
pub fn simulate(transport: &mut impl Transport, config: &SimConfig) -> Result<SimReport, SimError> {
    simulate_with(transport, config, |_| {})
}

/// [`simulate`] with a callback per finished round, for streaming logs.
pub fn simulate_with(
    transport: &mut impl Transport,
    config: &SimConfig,
    mut on_round: impl FnMut(&RoundLog),
) -> Result<SimReport, SimError> {
    let mut client = Client { t: transport };
    let fid = config.family_id.as_str();
    let families: Vec<Value> = client.get("/api/families")?;
    if !families.iter().any(|f| f["family_id"] == fid) {
        return Err(SimError::FamilyMissing(fid.to_string()));
    }
    if config.speakers.is_empty() {
        return Err(SimError::Protocol { path: "simulate".into(), reason: "no speakers".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let version_initial = client.retrain(fid)?;
    let f1_initial = client.evaluate(fid, &config.holdout)?;
    let contributions_before = client.stats(fid)?["contributions"].as_u64().unwrap_or_default();

    let mut sessions: BTreeMap<String, String> = BTreeMap::new();
    let mut log = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let speaker = config.speakers.choose(&mut rng).expect("speakers is non-empty");
        let sid = match sessions.get(&speaker.label_id) {
            Some(s) => s.clone(),
            None => {
                let seed: u64 = rng.gen();
                let v: Value =
                    client.post("/api/sessions", json!({ "family_id": fid, "familiar": true, "seed": seed }))?;
                let sid = v["session_id"].as_str().unwrap_or_default().to_string();
                sessions.insert(speaker.label_id.clone(), sid.clone());
                sid
            }
        };
        let prompt: Value = client.get(&format!("/api/sessions/{sid}/quiz"))?;
        let standard = prompt["standard_text"].as_str().unwrap_or_default();
        let tier: Tier = decode("quiz", prompt["tier"].clone())?;
        let text = speaker.rewrite(standard, &mut rng);
        let result: Value = client.post(&format!("/api/sessions/{sid}/quiz/submit"), json!({ "text": text }))?;
        let predicted: Vec<String> = decode("submit", result["predicted_labels"].clone())?;
        let correct = predicted.first() == Some(&speaker.label_id);
        let truthful = rng.gen_bool(config.confirm_accuracy.clamp(0.0, 1.0));
        let exact = predicted.len() == 1 && correct;
        let action = if !truthful || exact { Action::Confirm } else { Action::Correct };
        let decision = match action {
            Action::Confirm => json!("confirm"),
            Action::Correct => json!({ "label": speaker.label_id }),
        };
        let review: Value = client.post(&format!("/api/sessions/{sid}/review"), json!({ "decision": decision }))?;
        let stats = client.stats(fid)?;
        let entry = RoundLog {
            round,
            speaker: speaker.label_id.clone(),
            tier,
            group_id: prompt["group_id"].as_str().unwrap_or_default().to_string(),
            predicted,
            correct,
            action,
            d_mean: stats["mean_difficulty"].as_f64().unwrap_or_default(),
            model_version: review["retrained_to"]
                .as_u64()
                .unwrap_or_else(|| stats["model_version"].as_u64().unwrap_or_default()),
        };
        on_round(&entry);
        log.push(entry);
    }

    let version_final = client.retrain(fid)?;
    let f1_final = client.evaluate(fid, &config.holdout)?;
    let contributions_after = client.stats(fid)?["contributions"].as_u64().unwrap_or_default();
    for sid in sessions.values() {
        let _ = client.call(Method::Delete, &format!("/api/sessions/{sid}"), None);
    }
    let confirms = log.iter().filter(|l| l.action == Action::Confirm).count();
    Ok(SimReport {
        summary: SimSummary {
            family_id: fid.to_string(),
            rounds: config.rounds,
            seed: config.seed,
            corpus_growth: contributions_after - contributions_before,
            confirms,
            corrections: log.len() - confirms,
            f1_initial,
            f1_final,
            model_version_initial: version_initial,
            model_version_final: version_final,
        },
        log,
    })
}
