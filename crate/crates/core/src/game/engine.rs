use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::rngs::OsRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{
    jaccard, predicted_labels, Correction, EngineConfig, GameError, GamePath, GeoEditRequest, MatchAnswer,
    MatchItem, MatchRound, MatchRoundView, QuizPrompt, QuizTurn, RegionPayload, RetrainMode, ReviewResult,
    Session, SessionView, Stage, SubmitResult, Training,
};
use crate::classifier::{
    autotune, evaluate, split_train_test, train, ClassifierError, Dataset, EvalReport, LabeledText,
    TrainedModel,
};
use crate::corpus::{CorpusView, EventBody, Store};
use crate::geo::{cells_in_lasso, divisions_covering, edit_region, region_boundary};
use crate::selection::{next_sentence, rescore_all, should_retrain, DifficultyRecord, Tier, TierTable};
use crate::text::normalize;

const SUGGESTION_SEED_WORDS: usize = 20;
const MAX_SUGGESTIONS: usize = 10;

/// Model currently answering predictions for one family.
struct Serving {
    model: Arc<TrainedModel>,
    version: u64,
    tiers: Arc<TierTable>,
    report: Option<EvalReport>,
    /// `contributions` of the corpus the model was trained on.
    trained_contributions: u64,
    trained_labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub family_id: String,
    pub model_version: u64,
    /// Micro-F1 on the held-out 20%; absent when the corpus is too small to
    /// hold anything out.
    pub micro_f1: Option<f64>,
    pub report: Option<EvalReport>,
    pub model_bytes: u64,
    pub tier_counts: BTreeMap<Tier, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { outcome: RetrainOutcome },
    Failed { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: u64,
    pub family_id: String,
    #[serde(flatten)]
    pub state: JobState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family_id: String,
    pub groups: usize,
    pub variants: usize,
    pub labels: usize,
    pub observed_labels: usize,
    pub contributions: u64,
    pub model_version: u64,
    pub micro_f1: Option<f64>,
    pub tier_counts: BTreeMap<Tier, usize>,
    pub mean_difficulty: f64,
}

/// Model sidecar written next to `<family>.dlg`.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    model_version: u64,
    trained_contributions: u64,
    report: Option<EvalReport>,
}

struct Shared {
    store: Arc<Store>,
    config: EngineConfig,
    serving: RwLock<HashMap<String, Arc<Serving>>>,
    init_lock: Mutex<()>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    training: Mutex<HashSet<String>>,
    jobs: Mutex<BTreeMap<u64, JobStatus>>,
    rng: Mutex<ChaCha8Rng>,
}

/// Owns sessions and served models for every family in a store. Cheap to
/// clone; clones share state.
#[derive(Clone)]
pub struct Engine {
    shared: Arc<Shared>,
}

/// Exclusive right to retrain one family; released on drop.
pub struct TrainingSlot {
    shared: Arc<Shared>,
    family_id: String,
}

impl Drop for TrainingSlot {
    fn drop(&mut self) {
        self.shared.training.lock().remove(&self.family_id);
    }
}

impl Engine {
    pub fn new(store: Arc<Store>, config: EngineConfig) -> Self {
        let seed = config.seed.unwrap_or_else(|| OsRng.next_u64());
        Self {
            shared: Arc::new(Shared {
                store,
                config,
                serving: RwLock::new(HashMap::new()),
                init_lock: Mutex::new(()),
                sessions: Mutex::new(HashMap::new()),
                training: Mutex::new(HashSet::new()),
                jobs: Mutex::new(BTreeMap::new()),
                rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            }),
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.shared.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    fn seed(&self) -> u64 {
        self.shared.config.seed.unwrap_or(0)
    }

    /// Load or train a model for every family so the first request does
    /// not pay for it.
    pub fn warm_up(&self) -> Result<(), GameError> {
        for f in self.shared.store.families() {
            self.serving(&f.family_id)?;
        }
        Ok(())
    }

    // ---- models -------------------------------------------------------

    fn model_dir(&self) -> Option<PathBuf> {
        self.shared.store.data_dir().map(|d| d.join("models"))
    }

    fn serving(&self, family_id: &str) -> Result<Arc<Serving>, GameError> {
        if let Some(s) = self.shared.serving.read().get(family_id) {
            return Ok(Arc::clone(s));
        }
        let _guard = self.shared.init_lock.lock();
        if let Some(s) = self.shared.serving.read().get(family_id) {
            return Ok(Arc::clone(s));
        }
        let view = self.shared.store.snapshot(family_id)?;
        let serving = match self.load_persisted(&view) {
            Some(s) => s,
            None => match self.fit(&view, 1) {
                Ok(s) => {
                    self.persist(family_id, &s);
                    s
                }
                Err(GameError::Classifier(e)) => {
                    warn!(family = family_id, error = %e, "serving an untrained model");
                    self.untrained(&view)?
                }
                Err(e) => return Err(e),
            },
        };
        let serving = Arc::new(serving);
        self.shared.serving.write().insert(family_id.to_string(), Arc::clone(&serving));
        Ok(serving)
    }

    /// Uniform predictions over the current label set, version 0.
    fn untrained(&self, view: &CorpusView) -> Result<Serving, GameError> {
        let labels: Vec<String> = view.label_set().into_iter().collect();
        let config = match &self.shared.config.training {
            Training::Fixed(c) => c.clone(),
            Training::Autotune { .. } => crate::classifier::ModelConfig::minimal(self.seed()),
        };
        let model = TrainedModel::zeros(config, labels);
        let tiers = rescore_all(view, &model, 0)?;
        Ok(Serving {
            model: Arc::new(model),
            version: 0,
            tiers: Arc::new(tiers),
            report: None,
            trained_contributions: view.contributions(),
            trained_labels: view.label_set(),
        })
    }

    /// Train on the view: score on a seeded 80/20 split, then serve a refit
    /// on every variant with the same configuration.
    fn fit(&self, view: &CorpusView, version: u64) -> Result<Serving, GameError> {
        let data = Dataset::from_view(view);
        if data.observed_labels().len() < 2 {
            return Err(ClassifierError::SingleClassCorpus.into());
        }
        let seed = self.seed();
        let (config, report) = match &self.shared.config.training {
            Training::Fixed(config) => {
                let split = split_train_test(&data.items, 0.8, seed);
                let held_out = train(&split.train, &data.label_index, config)?;
                let report = evaluate(&held_out, &split.test).ok().map(|r| r.with_split_seed(seed));
                (config.clone(), report)
            }
            Training::Autotune { budget, max_bytes } => {
                let out = autotune(&data, *budget, *max_bytes, seed)?;
                (out.config, Some(out.report))
            }
        };
        let model = train(&data.items, &data.label_index, &config)?;
        let tiers = rescore_all(view, &model, version)?;
        Ok(Serving {
            model: Arc::new(model),
            version,
            tiers: Arc::new(tiers),
            report,
            trained_contributions: view.contributions(),
            trained_labels: view.label_set(),
        })
    }

    fn load_persisted(&self, view: &CorpusView) -> Option<Serving> {
        let dir = self.model_dir()?;
        let fid = view.family_id();
        let model = TrainedModel::load(dir.join(format!("{fid}.dlg"))).ok()?;
        let meta: ModelMeta =
            serde_json::from_slice(&std::fs::read(dir.join(format!("{fid}.json"))).ok()?).ok()?;
        let labels = view.label_set();
        if model.label_index().iter().cloned().collect::<BTreeSet<_>>() != labels {
            return None;
        }
        let tiers = rescore_all(view, &model, meta.model_version).ok()?;
        info!(family = fid, version = meta.model_version, "loaded persisted model");
        Some(Serving {
            model: Arc::new(model),
            version: meta.model_version,
            tiers: Arc::new(tiers),
            report: meta.report,
            trained_contributions: meta.trained_contributions,
            trained_labels: labels,
        })
    }

    fn persist(&self, family_id: &str, s: &Serving) {
        let Some(dir) = self.model_dir() else { return };
        let meta = ModelMeta {
            model_version: s.version,
            trained_contributions: s.trained_contributions,
            report: s.report.clone(),
        };
        let result = std::fs::create_dir_all(&dir)
            .map_err(ClassifierError::from)
            .and_then(|_| s.model.save(dir.join(format!("{family_id}.dlg"))))
            .and_then(|_| {
                let bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
                std::fs::write(dir.join(format!("{family_id}.json")), bytes).map_err(ClassifierError::from)
            });
        if let Err(e) = result {
            warn!(family = family_id, error = %e, "could not persist model");
        }
    }

    /// Retrain and rescore one family, then swap the new model in. Fails
    /// with `RetrainInProgress` if another retrain of the family is running.
    pub fn retrain(&self, family_id: &str) -> Result<RetrainOutcome, GameError> {
        self.shared.store.snapshot(family_id)?;
        let slot = self.claim_training(family_id)?;
        self.retrain_claimed(slot)
    }

    fn retrain_claimed(&self, slot: TrainingSlot) -> Result<RetrainOutcome, GameError> {
        let family_id = slot.family_id.as_str();
        let view = self.shared.store.snapshot(family_id)?;
        let version = self.current_version(family_id) + 1;
        let next = self.fit(&view, version)?;
        self.persist(family_id, &next);
        let outcome = RetrainOutcome {
            family_id: family_id.to_string(),
            model_version: next.version,
            micro_f1: next.report.as_ref().map(|r| r.micro_f1),
            report: next.report.clone(),
            model_bytes: next.model.byte_size(),
            tier_counts: next.tiers.counts(),
        };
        info!(family = family_id, version, f1 = ?outcome.micro_f1, "retrained");
        self.shared.serving.write().insert(family_id.to_string(), Arc::new(next));
        Ok(outcome)
    }

    /// Version of the served model, else of the persisted one, else 0.
    fn current_version(&self, family_id: &str) -> u64 {
        if let Some(s) = self.shared.serving.read().get(family_id) {
            return s.version;
        }
        self.model_dir()
            .and_then(|d| std::fs::read(d.join(format!("{family_id}.json"))).ok())
            .and_then(|b| serde_json::from_slice::<ModelMeta>(&b).ok())
            .map_or(0, |m| m.model_version)
    }

    /// Reserve `family_id` so no retrain can start until the slot drops.
    pub fn claim_training(&self, family_id: &str) -> Result<TrainingSlot, GameError> {
        let mut set = self.shared.training.lock();
        if !set.insert(family_id.to_string()) {
            return Err(GameError::RetrainInProgress(family_id.to_string()));
        }
        Ok(TrainingSlot { shared: Arc::clone(&self.shared), family_id: family_id.to_string() })
    }

    pub fn is_retraining(&self, family_id: &str) -> bool {
        self.shared.training.lock().contains(family_id)
    }

    /// Start a retrain on a worker thread and return its job id.
    pub fn retrain_async(&self, family_id: &str) -> Result<u64, GameError> {
        self.shared.store.snapshot(family_id)?;
        let slot = self.claim_training(family_id)?;
        let job_id = {
            let mut jobs = self.shared.jobs.lock();
            let id = jobs.keys().next_back().map_or(1, |k| k + 1);
            jobs.insert(id, JobStatus { job_id: id, family_id: family_id.to_string(), state: JobState::Running });
            id
        };
        let engine = self.clone();
        std::thread::spawn(move || {
            let state = match engine.retrain_claimed(slot) {
                Ok(outcome) => JobState::Done { outcome },
                Err(e) => JobState::Failed { code: e.code().to_string(), message: e.to_string() },
            };
            if let Some(j) = engine.shared.jobs.lock().get_mut(&job_id) {
                j.state = state;
            }
        });
        Ok(job_id)
    }

    pub fn job(&self, job_id: u64) -> Option<JobStatus> {
        self.shared.jobs.lock().get(&job_id).cloned()
    }

    /// Apply the automatic retraining policy after a contribution.
    fn after_contribution(&self, family_id: &str) -> Option<u64> {
        let serving = self.serving(family_id).ok()?;
        let view = self.shared.store.snapshot(family_id).ok()?;
        let accepted = view.contributions().saturating_sub(serving.trained_contributions);
        let grew = view.label_set() != serving.trained_labels;
        if !should_retrain(accepted, grew, self.shared.config.retrain) {
            return None;
        }
        match self.shared.config.retrain_mode {
            RetrainMode::Manual => None,
            RetrainMode::Inline => match self.retrain(family_id) {
                Ok(o) => Some(o.model_version),
                Err(e) => {
                    warn!(family = family_id, error = %e, "automatic retrain failed");
                    None
                }
            },
            RetrainMode::Background => {
                if let Ok(slot) = self.claim_training(family_id) {
                    let engine = self.clone();
                    std::thread::spawn(move || {
                        let fid = slot.family_id.clone();
                        if let Err(e) = engine.retrain_claimed(slot) {
                            warn!(family = %fid, error = %e, "background retrain failed");
                        }
                    });
                }
                None
            }
        }
    }

    pub fn model_version(&self, family_id: &str) -> Result<u64, GameError> {
        Ok(self.serving(family_id)?.version)
    }

    pub fn model(&self, family_id: &str) -> Result<Arc<TrainedModel>, GameError> {
        Ok(Arc::clone(&self.serving(family_id)?.model))
    }

    pub fn difficulty_report(&self, family_id: &str) -> Result<Vec<DifficultyRecord>, GameError> {
        Ok(self.serving(family_id)?.tiers.records.clone())
    }

    pub fn tier_table(&self, family_id: &str) -> Result<Arc<TierTable>, GameError> {
        Ok(Arc::clone(&self.serving(family_id)?.tiers))
    }

    /// Score the served model on caller-supplied labeled sentences.
    pub fn evaluate_holdout(&self, family_id: &str, items: &[LabeledText]) -> Result<EvalReport, GameError> {
        let serving = self.serving(family_id)?;
        Ok(evaluate(&serving.model, items)?)
    }

    pub fn stats(&self, family_id: &str) -> Result<FamilyStats, GameError> {
        let serving = self.serving(family_id)?;
        let view = self.shared.store.snapshot(family_id)?;
        let observed = view
            .groups()
            .values()
            .flat_map(|g| g.variants.iter().flat_map(|v| v.labels.iter()))
            .collect::<BTreeSet<_>>()
            .len();
        Ok(FamilyStats {
            family_id: family_id.to_string(),
            groups: view.groups().len(),
            variants: view.variant_count(),
            labels: view.labels().len(),
            observed_labels: observed,
            contributions: view.contributions(),
            model_version: serving.version,
            micro_f1: serving.report.as_ref().map(|r| r.micro_f1),
            tier_counts: serving.tiers.counts(),
            mean_difficulty: serving.tiers.mean_score(),
        })
    }

    // ---- sessions -----------------------------------------------------

    /// Open a session. `seed` fixes the session's sampling for replay;
    /// without it one is drawn from the engine's generator.
    pub fn start_session(&self, family_id: &str, familiar: bool, seed: Option<u64>) -> Result<SessionView, GameError> {
        if !self.shared.store.has_family(family_id) {
            return Err(GameError::UnknownFamily(family_id.to_string()));
        }
        self.serving(family_id)?;
        self.sweep_expired();
        let (session_id, session_seed) = {
            let mut rng = self.shared.rng.lock();
            let id = format!("{:032x}", rng.gen::<u128>());
            (id, seed.unwrap_or_else(|| rng.next_u64()))
        };
        self.shared.store.register_session(&session_id, family_id)?;
        let path = if familiar { GamePath::Quiz } else { GamePath::Match };
        let session = Session {
            session_id: session_id.clone(),
            family_id: family_id.to_string(),
            path,
            stage: match path {
                GamePath::Quiz => Stage::Quiz,
                GamePath::Match => Stage::Match,
            },
            level: Tier::Easy,
            seen_groups: BTreeSet::new(),
            turn: None,
            round: None,
            rounds_played: 0,
            rng: ChaCha8Rng::seed_from_u64(session_seed),
            last_active: self.shared.store.clock().now(),
        };
        let view = session.view();
        self.shared.sessions.lock().insert(session_id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    /// Drop sessions idle longer than the configured timeout, with any
    /// open turn.
    pub fn sweep_expired(&self) -> usize {
        let Ok(timeout) = chrono::Duration::from_std(self.shared.config.idle_timeout) else {
            return 0;
        };
        let cutoff = self.shared.store.clock().now() - timeout;
        let mut sessions = self.shared.sessions.lock();
        let expired: Vec<String> = sessions
            .iter()
            .filter(|(_, s)| s.try_lock().is_some_and(|s| s.last_active < cutoff))
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            sessions.remove(id);
            self.shared.store.forget_session(id);
        }
        expired.len()
    }

    pub fn session_count(&self) -> usize {
        self.shared.sessions.lock().len()
    }

    /// Run `f` on the session under its lock, refreshing its idle clock.
    fn with_session<T>(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, GameError>,
    ) -> Result<T, GameError> {
        let handle = self
            .shared
            .sessions
            .lock()
            .get(session_id)
            .cloned()
            .ok_or_else(|| GameError::UnknownSession(session_id.to_string()))?;
        let mut session = handle.lock();
        let now = self.shared.store.clock().now();
        if let Ok(timeout) = chrono::Duration::from_std(self.shared.config.idle_timeout) {
            if session.last_active < now - timeout {
                drop(session);
                self.shared.sessions.lock().remove(session_id);
                self.shared.store.forget_session(session_id);
                return Err(GameError::UnknownSession(session_id.to_string()));
            }
        }
        session.last_active = now;
        f(&mut session)
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView, GameError> {
        self.with_session(session_id, |s| Ok(s.view()))
    }

    pub fn end_session(&self, session_id: &str) -> Result<SessionView, GameError> {
        let view = self.with_session(session_id, |s| {
            s.stage = Stage::Done;
            s.turn = None;
            s.round = None;
            Ok(s.view())
        })?;
        self.shared.sessions.lock().remove(session_id);
        self.shared.store.forget_session(session_id);
        Ok(view)
    }

    pub fn begin_quiz_turn(&self, session_id: &str) -> Result<QuizPrompt, GameError> {
        self.with_session(session_id, |s| {
            if s.stage != Stage::Quiz {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            if s.turn.is_some() {
                return Err(GameError::TurnAlreadyOpen);
            }
            let serving = self.serving(&s.family_id)?;
            let view = self.shared.store.snapshot(&s.family_id)?;
            let level = s.level;
            let (group_id, tier) = next_sentence(&serving.tiers, &mut s.seen_groups, level, &mut s.rng)?;
            let group = view.group(&group_id).ok_or_else(|| GameError::UnknownGroup(group_id.clone()))?;
            s.turn = Some(QuizTurn {
                group_id: group_id.clone(),
                standard_text: group.standard_text.clone(),
                tier_at_issue: tier,
                submitted_text: None,
                prediction: None,
                predicted_labels: None,
            });
            Ok(QuizPrompt {
                group_id,
                standard_text: group.standard_text.clone(),
                tier,
                suggestion_seed_words: top_words(&view, SUGGESTION_SEED_WORDS),
            })
        })
    }

    pub fn submit_rewrite(&self, session_id: &str, text: &str) -> Result<SubmitResult, GameError> {
        self.with_session(session_id, |s| {
            if s.stage != Stage::Quiz {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            let Some(turn) = s.turn.as_mut() else {
                return Err(GameError::NoOpenTurn);
            };
            let text = normalize(text);
            if text.is_empty() {
                return Err(GameError::EmptyText);
            }
            let serving = self.serving(&s.family_id)?;
            let view = self.shared.store.snapshot(&s.family_id)?;
            let prediction = serving.model.predict(&text);
            let labels = predicted_labels(&prediction, self.shared.config.tau);
            let region_payloads = labels
                .iter()
                .filter_map(|l| view.labels().get(l))
                .map(|label| RegionPayload {
                    label_id: label.label_id().to_string(),
                    name: label.name().to_string(),
                    probability: prediction.get(label.label_id()),
                    rings: region_boundary(&label.region(), view.family()),
                })
                .collect();
            turn.submitted_text = Some(text);
            turn.prediction = Some(prediction.clone());
            turn.predicted_labels = Some(labels.clone());
            s.stage = Stage::Review;
            Ok(SubmitResult { prediction, predicted_labels: labels, region_payloads })
        })
    }

    /// The player is satisfied: store the rewrite under the predicted
    /// labels and raise the level.
    pub fn review_confirm(&self, session_id: &str) -> Result<ReviewResult, GameError> {
        let (family_id, result) = self.with_session(session_id, |s| {
            if s.stage != Stage::Review {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            let turn = s.turn.as_ref().ok_or(GameError::NoOpenTurn)?;
            let text = turn.submitted_text.clone().ok_or(GameError::NoOpenTurn)?;
            let labels: BTreeSet<String> = turn.predicted_labels.iter().flatten().cloned().collect();
            let group_id = turn.group_id.clone();
            let recorded = self
                .shared
                .store
                .record_with(session_id, |state| EventBody::confirm(state, &group_id, &text, labels))?;
            s.level = s.level.step_up();
            s.stage = Stage::Quiz;
            s.turn = None;
            s.rounds_played += 1;
            Ok((
                s.family_id.clone(),
                ReviewResult {
                    new_level: s.level,
                    variant_id: recorded.change.map(|c| c.variant_id).unwrap_or_default(),
                    label_id: None,
                    event_ids: vec![recorded.event_id],
                    retrained_to: None,
                },
            ))
        })?;
        Ok(ReviewResult { retrained_to: self.after_contribution(&family_id), ..result })
    }

    /// The prediction was wrong: store the rewrite under the player's
    /// choice, optionally editing that dialect's region. The level stays.
    pub fn review_correct(
        &self,
        session_id: &str,
        choice: Correction,
        geo_edit: Option<GeoEditRequest>,
    ) -> Result<ReviewResult, GameError> {
        let (family_id, result) = self.with_session(session_id, |s| {
            if s.stage != Stage::Review {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            let turn = s.turn.as_ref().ok_or(GameError::NoOpenTurn)?;
            let text = turn.submitted_text.clone().ok_or(GameError::NoOpenTurn)?;
            let predicted = turn.predicted_labels.clone().unwrap_or_default();
            let group_id = turn.group_id.clone();
            let view = self.shared.store.snapshot(&s.family_id)?;

            // Validate everything before the first event is written.
            let current_cells = match &choice {
                Correction::Label(id) => view
                    .labels()
                    .get(id)
                    .map(|l| l.region())
                    .ok_or_else(|| GameError::UnknownLabel(id.clone()))?,
                Correction::NewDialect(name) => {
                    let name = normalize(name);
                    if name.is_empty() {
                        return Err(GameError::InvalidInput("dialect name is empty".into()));
                    }
                    let folded = name.to_lowercase();
                    if view.labels().values().any(|l| l.name().to_lowercase() == folded) {
                        return Err(GameError::DuplicateDialectName(name));
                    }
                    crate::geo::HexRegion::empty(s.family_id.clone())
                }
            };
            let edit = match geo_edit {
                Some(req) => {
                    let mut add = req.add;
                    if let Some(poly) = &req.lasso {
                        add.extend(cells_in_lasso(poly, view.family())?);
                    }
                    edit_region(&current_cells, &add, &req.remove, view.family())?;
                    (!add.is_empty() || !req.remove.is_empty()).then_some((add, req.remove))
                }
                None => None,
            };

            let mut event_ids = Vec::new();
            let recorded = self.shared.store.record_with(session_id, |state| match &choice {
                Correction::Label(id) => EventBody::relabel(state, &group_id, &text, id, predicted.clone()),
                Correction::NewDialect(name) => EventBody::new_dialect(state, name, &group_id, &text),
            })?;
            event_ids.push(recorded.event_id);
            let label_id = match &choice {
                Correction::Label(id) => id.clone(),
                Correction::NewDialect(_) => {
                    let view = self.shared.store.snapshot(&s.family_id)?;
                    let variant = recorded.change.as_ref().map(|c| c.variant_id.clone()).unwrap_or_default();
                    let (_, v) = view
                        .find_variant(&variant)
                        .ok_or_else(|| GameError::Internal("new variant missing".into()))?;
                    v.labels.iter().next().cloned().unwrap_or_default()
                }
            };
            if let Some((add, remove)) = edit {
                let family_id = s.family_id.clone();
                let geo = self.shared.store.record_with(session_id, |_| {
                    Ok(EventBody::GeoEdit { family_id, label_id: label_id.clone(), add, remove })
                });
                event_ids.push(geo?.event_id);
            }
            s.stage = Stage::Quiz;
            s.turn = None;
            s.rounds_played += 1;
            Ok((
                s.family_id.clone(),
                ReviewResult {
                    new_level: s.level,
                    variant_id: recorded.change.map(|c| c.variant_id).unwrap_or_default(),
                    label_id: Some(label_id),
                    event_ids,
                    retrained_to: None,
                },
            ))
        })?;
        Ok(ReviewResult { retrained_to: self.after_contribution(&family_id), ..result })
    }

    pub fn set_difficulty(&self, session_id: &str, tier: Tier) -> Result<SessionView, GameError> {
        self.with_session(session_id, |s| {
            if s.turn.is_some() {
                return Err(GameError::TurnAlreadyOpen);
            }
            if s.stage != Stage::Quiz {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            s.level = tier;
            Ok(s.view())
        })
    }

    /// Words from the family's dialect variants starting with `prefix`,
    /// most frequent first, ties in lexicographic order.
    pub fn suggest_words(&self, family_id: &str, prefix: &str) -> Result<Vec<String>, GameError> {
        let view = self.shared.store.snapshot(family_id)?;
        let prefix = normalize(prefix).to_lowercase();
        if prefix.is_empty() {
            return Err(GameError::InvalidInput("prefix is empty".into()));
        }
        let mut hits: Vec<(&String, u64)> = view
            .word_frequencies()
            .iter()
            .filter(|(w, _)| w.starts_with(&prefix))
            .map(|(w, n)| (w, *n))
            .collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(hits.into_iter().take(MAX_SUGGESTIONS).map(|(w, _)| w.clone()).collect())
    }

    // ---- match --------------------------------------------------------

    /// Open a round of three sentences from distinct groups, or return the
    /// round still in progress.
    pub fn begin_match_round(&self, session_id: &str) -> Result<MatchRoundView, GameError> {
        self.with_session(session_id, |s| {
            if s.stage != Stage::Match {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            if let Some(round) = &s.round {
                if !round.is_complete() {
                    return Ok(round.public());
                }
            }
            let view = self.shared.store.snapshot(&s.family_id)?;
            let eligible = match_candidates(&view);
            if eligible.len() < 3 {
                return Err(GameError::InsufficientData);
            }
            let picks = rand::seq::index::sample(&mut s.rng, eligible.len(), 3);
            let items: Vec<MatchItem> = picks
                .into_iter()
                .map(|i| {
                    let options = &eligible[i];
                    options[s.rng.gen_range(0..options.len())].clone()
                })
                .collect();
            let round = MatchRound { answers: vec![None; 3], scores: vec![None; 3], items };
            let public = round.public();
            s.round = Some(round);
            Ok(public)
        })
    }

    pub fn match_round(&self, session_id: &str) -> Result<Option<MatchRoundView>, GameError> {
        self.with_session(session_id, |s| Ok(s.round.as_ref().map(MatchRound::public)))
    }

    pub fn submit_match_answer(
        &self,
        session_id: &str,
        index: usize,
        divisions: BTreeSet<String>,
    ) -> Result<MatchAnswer, GameError> {
        self.with_session(session_id, |s| {
            if s.stage != Stage::Match {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            let view = self.shared.store.snapshot(&s.family_id)?;
            let round = s.round.as_mut().filter(|r| !r.is_complete()).ok_or(GameError::NoOpenRound)?;
            let item = round
                .items
                .get(index)
                .ok_or_else(|| GameError::InvalidInput(format!("match item {index} does not exist")))?;
            if round.answers[index].is_some() {
                return Err(GameError::AlreadyAnswered(index));
            }
            if let Some(bad) = divisions.iter().find(|d| !view.divisions().iter().any(|x| &x.division_id == *d)) {
                return Err(GameError::UnknownDivision(bad.clone()));
            }
            let score = jaccard(&divisions, &item.reference_divisions);
            let reference = item.reference_divisions.clone();
            round.answers[index] = Some(divisions);
            round.scores[index] = Some(score);
            let complete = round.is_complete();
            if complete {
                s.rounds_played += 1;
            }
            Ok(MatchAnswer { reference_divisions: reference, score, round_complete: complete })
        })
    }

    /// Record that the player disagrees with an item's reference. Stored
    /// only; the registry is not changed.
    pub fn record_match_correction(
        &self,
        session_id: &str,
        index: usize,
        divisions: BTreeSet<String>,
    ) -> Result<u64, GameError> {
        self.with_session(session_id, |s| {
            if s.stage != Stage::Match {
                return Err(GameError::WrongStage { actual: s.stage });
            }
            let round = s.round.as_ref().ok_or(GameError::NoOpenRound)?;
            let item = round
                .items
                .get(index)
                .ok_or_else(|| GameError::InvalidInput(format!("match item {index} does not exist")))?;
            if round.answers[index].is_none() {
                return Err(GameError::InvalidInput(format!("match item {index} is not answered yet")));
            }
            let body = EventBody::MatchCorrection {
                family_id: s.family_id.clone(),
                variant_id: item.variant_id.clone(),
                divisions,
            };
            Ok(self.shared.store.record_with(session_id, |_| Ok(body))?.event_id)
        })
    }
}

/// Most frequent corpus words, ties in lexicographic order.
fn top_words(view: &CorpusView, n: usize) -> Vec<String> {
    let mut all: Vec<(&String, u64)> = view.word_frequencies().iter().map(|(w, c)| (w, *c)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    all.into_iter().take(n).map(|(w, _)| w.clone()).collect()
}

/// Match candidates grouped by parallel group: variants whose labels map to
/// at least one administrative division. Groups without any are left out.
fn match_candidates(view: &CorpusView) -> Vec<Vec<MatchItem>> {
    let label_divisions: BTreeMap<&str, BTreeSet<String>> = view
        .labels()
        .values()
        .map(|l| (l.label_id(), divisions_covering(&l.region(), view.divisions(), view.family())))
        .collect();
    view.groups()
        .values()
        .filter_map(|g| {
            let items: Vec<MatchItem> = g
                .variants
                .iter()
                .filter_map(|v| {
                    let reference: BTreeSet<String> = v
                        .labels
                        .iter()
                        .filter_map(|l| label_divisions.get(l.as_str()))
                        .flatten()
                        .cloned()
                        .collect();
                    (!reference.is_empty()).then(|| MatchItem {
                        variant_id: v.variant_id.clone(),
                        group_id: g.group_id.clone(),
                        text: v.text.clone(),
                        reference_divisions: reference,
                    })
                })
                .collect();
            (!items.is_empty()).then_some(items)
        })
        .collect()
}

#[allow(dead_code)]
fn assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<Engine>();
}
