use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    AddOutcome, CorpusRecord, CorpusView, EventBody, FamilyState, FeedbackEvent, LanguageFamily,
    NewEvent, RegistryFile, StoreError,
};
use crate::geo::{AdminDivision, DivisionFile};
use crate::text::Clock;

const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";
const FAMILIES_DIR: &str = "families";

/// Result of `record_event`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recorded {
    pub event_id: u64,
    /// Corpus effect, for events that add a rewrite.
    pub change: Option<AddOutcome>,
}

/// Seed line as kept in the data directory.
#[derive(Serialize, Deserialize)]
struct SeedLine {
    #[serde(flatten)]
    record: CorpusRecord,
    ingested_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct Compacted {
    seed_digest: String,
    last_event_id: u64,
    families: BTreeMap<String, FamilyState>,
}

struct Inner {
    families: BTreeMap<String, Arc<FamilyState>>,
    sessions: HashMap<String, String>,
    events: Vec<FeedbackEvent>,
    log: Option<File>,
}

/// Single-writer corpus store. All mutations serialize on one lock; readers
/// take `CorpusView` snapshots that later writes never touch.
pub struct Store {
    dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl Store {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            dir: None,
            clock,
            inner: Mutex::new(Inner {
                families: BTreeMap::new(),
                sessions: HashMap::new(),
                events: Vec::new(),
                log: None,
            }),
        }
    }

    /// Open a data directory, rebuilding state from seed files, the latest
    /// compacted snapshot (if still valid), and the event log.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(FAMILIES_DIR))?;
        let (mut families, divisions) = load_seeds(&dir)?;
        let digest = seed_digest(&dir)?;

        let mut snapshot_upto = 0;
        if let Ok(bytes) = fs::read(dir.join(SNAPSHOT_FILE)) {
            let compacted: Compacted = serde_json::from_slice(&bytes)?;
            if compacted.seed_digest == digest {
                snapshot_upto = compacted.last_event_id;
                for (fid, mut st) in compacted.families {
                    st.reindex(divisions.get(&fid).cloned().unwrap_or_default());
                    families.insert(fid, st);
                }
            }
        }

        let log_path = dir.join(EVENTS_FILE);
        let events = read_log(&log_path)?;
        for (expected, ev) in (1u64..).zip(&events) {
            if ev.event_id != expected {
                return Err(StoreError::CorruptLog {
                    line: expected as usize,
                    reason: format!("expected event id {expected}, found {}", ev.event_id),
                });
            }
            if ev.event_id <= snapshot_upto {
                continue;
            }
            let st = families
                .get_mut(ev.body.family_id())
                .ok_or_else(|| StoreError::UnknownFamily(ev.body.family_id().to_string()))?;
            ev.body.validate(st)?;
            ev.body.apply(st, ev.created_at)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Self {
            dir: Some(dir),
            clock,
            inner: Mutex::new(Inner {
                families: families.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
                sessions: HashMap::new(),
                events,
                log: Some(log),
            }),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Register a family from its registry (and optional division file).
    /// Re-registering an identical registry is a no-op.
    pub fn register_family(
        &self,
        registry: RegistryFile,
        divisions: Option<DivisionFile>,
    ) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let fid = registry.family.family_id.clone();
        if let Some(existing) = inner.families.get(&fid) {
            let same = existing.family == registry.family
                && registry.labels.iter().all(|l| existing.labels.get(l.label_id()) == Some(l))
                && registry.labels.len() <= existing.labels.len();
            return if same { Ok(()) } else { Err(StoreError::DuplicateFamily(fid)) };
        }
        let divs = divisions.clone().unwrap_or_default().divisions;
        let state = FamilyState::new(registry.clone(), divs)?;
        if let Some(dir) = &self.dir {
            let fdir = dir.join(FAMILIES_DIR).join(&fid);
            fs::create_dir_all(&fdir)?;
            fs::write(fdir.join("registry.json"), serde_json::to_vec_pretty(&registry)?)?;
            if let Some(d) = divisions {
                fs::write(fdir.join("divisions.json"), serde_json::to_vec_pretty(&d)?)?;
            }
            let _ = fs::remove_file(dir.join(SNAPSHOT_FILE));
        }
        inner.families.insert(fid, Arc::new(state));
        Ok(())
    }

    /// Load a line-delimited corpus file into a family. The whole file is
    /// validated before anything is written.
    pub fn ingest_corpus(&self, path: impl AsRef<Path>, family_id: &str) -> Result<usize, StoreError> {
        let file = File::open(path)?;
        self.ingest_reader(BufReader::new(file), family_id)
    }

    pub fn ingest_reader(&self, reader: impl BufRead, family_id: &str) -> Result<usize, StoreError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| {
                StoreError::MalformedRecord { line: i + 1, reason: e.to_string() }
            })?;
            records.push((i + 1, rec));
        }
        self.ingest_records(records, family_id)
    }

    fn ingest_records(
        &self,
        records: Vec<(usize, CorpusRecord)>,
        family_id: &str,
    ) -> Result<usize, StoreError> {
        let mut inner = self.inner.lock();
        let state = inner
            .families
            .get_mut(family_id)
            .ok_or_else(|| StoreError::UnknownFamily(family_id.to_string()))?;
        state.validate_records(&records)?;
        let at = self.clock.now();
        let records: Vec<CorpusRecord> = records.into_iter().map(|(_, r)| r).collect();
        if let Some(dir) = &self.dir {
            let path = dir.join(FAMILIES_DIR).join(family_id).join("corpus.jsonl");
            let mut buf = Vec::new();
            for r in &records {
                serde_json::to_writer(&mut buf, &SeedLine { record: r.clone(), ingested_at: at })?;
                buf.push(b'\n');
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(&buf)?;
            f.sync_data()?;
            let _ = fs::remove_file(dir.join(SNAPSHOT_FILE));
        }
        let n = records.len();
        Arc::make_mut(state).insert_records(records, at);
        Ok(n)
    }

    pub fn register_session(&self, session_id: &str, family_id: &str) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        if !inner.families.contains_key(family_id) {
            return Err(StoreError::UnknownFamily(family_id.to_string()));
        }
        inner.sessions.insert(session_id.to_string(), family_id.to_string());
        Ok(())
    }

    pub fn forget_session(&self, session_id: &str) {
        self.inner.lock().sessions.remove(session_id);
    }

    /// Validate, durably append, then apply. Returns the new event id.
    pub fn record_event(&self, event: NewEvent) -> Result<Recorded, StoreError> {
        let NewEvent { session_id, body } = event;
        self.record_with(&session_id, move |_| Ok(body))
    }

    /// Like [`Store::record_event`], but the payload is built from the
    /// family state under the writer lock, so ids derived from the state
    /// (variant ids, minted label ids) cannot go stale.
    pub fn record_with(
        &self,
        session_id: &str,
        build: impl FnOnce(&FamilyState) -> Result<EventBody, StoreError>,
    ) -> Result<Recorded, StoreError> {
        let mut inner = self.inner.lock();
        let family = inner
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(session_id.to_string()))?;
        let event = NewEvent {
            session_id: session_id.to_string(),
            body: build(
                inner
                    .families
                    .get(&family)
                    .ok_or_else(|| StoreError::UnknownFamily(family.clone()))?,
            )?,
        };
        if family != event.body.family_id() {
            return Err(StoreError::InvalidPayload(format!(
                "session {} belongs to family {family}, payload names {}",
                event.session_id,
                event.body.family_id()
            )));
        }
        let state = inner
            .families
            .get(&family)
            .ok_or_else(|| StoreError::UnknownFamily(family.clone()))?;
        event.body.validate(state)?;

        let ev = FeedbackEvent {
            event_id: inner.events.last().map_or(0, |e| e.event_id) + 1,
            session_id: event.session_id,
            body: event.body,
            created_at: self.clock.now(),
        };
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(&ev)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        let state = inner.families.get_mut(&family).unwrap();
        let change = ev.body.apply(Arc::make_mut(state), ev.created_at)?;
        let event_id = ev.event_id;
        inner.events.push(ev);
        Ok(Recorded { event_id, change })
    }

    pub fn snapshot(&self, family_id: &str) -> Result<CorpusView, StoreError> {
        let inner = self.inner.lock();
        inner
            .families
            .get(family_id)
            .map(|s| CorpusView { state: Arc::clone(s) })
            .ok_or_else(|| StoreError::UnknownFamily(family_id.to_string()))
    }

    pub fn families(&self) -> Vec<LanguageFamily> {
        self.inner.lock().families.values().map(|s| s.family.clone()).collect()
    }

    pub fn has_family(&self, family_id: &str) -> bool {
        self.inner.lock().families.contains_key(family_id)
    }

    pub fn events(&self) -> Vec<FeedbackEvent> {
        self.inner.lock().events.clone()
    }

    pub fn last_event_id(&self) -> u64 {
        self.inner.lock().events.last().map_or(0, |e| e.event_id)
    }

    /// Write a compacted snapshot so the next open skips replaying the
    /// events it covers.
    pub fn compact(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let inner = self.inner.lock();
        let compacted = Compacted {
            seed_digest: seed_digest(dir)?,
            last_event_id: inner.events.last().map_or(0, |e| e.event_id),
            families: inner
                .families
                .iter()
                .map(|(k, v)| (k.clone(), FamilyState::clone(v)))
                .collect(),
        };
        let tmp = dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&compacted)?)?;
        fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}

fn family_dirs(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir.join(FAMILIES_DIR))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("registry.json").is_file())
        .collect();
    out.sort();
    Ok(out)
}

type Seeds = (BTreeMap<String, FamilyState>, BTreeMap<String, Vec<AdminDivision>>);

fn load_seeds(dir: &Path) -> Result<Seeds, StoreError> {
    let mut families = BTreeMap::new();
    let mut all_divisions = BTreeMap::new();
    for fdir in family_dirs(dir)? {
        let registry: RegistryFile = serde_json::from_slice(&fs::read(fdir.join("registry.json"))?)?;
        let divisions: Vec<AdminDivision> = match fs::read(fdir.join("divisions.json")) {
            Ok(b) => serde_json::from_slice::<DivisionFile>(&b)?.divisions,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let fid = registry.family.family_id.clone();
        let mut state = FamilyState::new(registry, divisions.clone())?;
        if let Ok(f) = File::open(fdir.join("corpus.jsonl")) {
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let seed: SeedLine = serde_json::from_str(&line).map_err(|e| {
                    StoreError::MalformedRecord { line: i + 1, reason: e.to_string() }
                })?;
                state.validate_records(&[(i + 1, seed.record.clone())])?;
                state.insert_records(vec![seed.record], seed.ingested_at);
            }
        }
        all_divisions.insert(fid.clone(), divisions);
        families.insert(fid, state);
    }
    Ok((families, all_divisions))
}

fn seed_digest(dir: &Path) -> Result<String, StoreError> {
    let mut h = Sha256::new();
    for fdir in family_dirs(dir)? {
        for name in ["registry.json", "divisions.json", "corpus.jsonl"] {
            h.update(name.as_bytes());
            if let Ok(bytes) = fs::read(fdir.join(name)) {
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Read the event log, dropping a torn final line left by a crash.
fn read_log(path: &Path) -> Result<Vec<FeedbackEvent>, StoreError> {
    let mut file = match OpenOptions::new().read(true).write(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        file.set_len(complete as u64)?;
        file.seek(SeekFrom::End(0))?;
    }
    let mut events = Vec::new();
    for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let ev: FeedbackEvent = serde_json::from_slice(line)
            .map_err(|e| StoreError::CorruptLog { line: i + 1, reason: e.to_string() })?;
        events.push(ev);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BoundingBox, DialectLabel, WritingDirection};
    use crate::geo::HexCell;
    use crate::text::ManualClock;
    use std::collections::BTreeSet;

    fn registry(fid: &str, labels: &[&str]) -> RegistryFile {
        RegistryFile {
            family: LanguageFamily {
                family_id: fid.into(),
                display_name: fid.to_uppercase(),
                bounding_box: BoundingBox::new(0.0, 0.0, 4.0, 3.0),
                hex_resolution: 0.2,
                admin_divisions: vec![],
                writing_direction: WritingDirection::Ltr,
            },
            labels: labels
                .iter()
                .map(|l| DialectLabel::new(*l, l.to_uppercase(), fid, BTreeSet::new()))
                .collect(),
        }
    }

    const CORPUS: &str = r#"{"group_id":"g1","standard":"Guten Morgen","variants":[{"text":"Guete Morge","labels":["a"]}]}
{"group_id":"g2","standard":"Danke","variants":[{"text":"Merci","labels":["a","b"]}]}
{"group_id":"g3","standard":"Tschüss","variants":[]}
"#;

    fn store() -> Store {
        let s = Store::in_memory(Arc::new(ManualClock::fixed()));
        s.register_family(registry("gsw", &["a", "b", "c"]), None).unwrap();
        s.register_family(registry("ku", &["x", "y"]), None).unwrap();
        s
    }

    fn confirm(text: &str, vid: &str) -> EventBody {
        EventBody::Confirm {
            family_id: "gsw".into(),
            group_id: "g3".into(),
            variant_id: vid.into(),
            text: text.into(),
            labels: ["a".to_string()].into(),
        }
    }

    #[test]
    fn ingest_counts_and_rejects_atomically() {
        let s = store();
        assert_eq!(s.ingest_reader(CORPUS.as_bytes(), "gsw").unwrap(), 3);
        let before = s.snapshot("gsw").unwrap().to_bytes();
        let bad = "{\"group_id\":\"g4\",\"standard\":\"x\",\"variants\":[]}\n{\"group_id\":\"g5\",\"standard\":\"y\",\"variants\":[{\"text\":\"t\",\"labels\":[\"zz\"]}]}\n";
        assert!(matches!(s.ingest_reader(bad.as_bytes(), "gsw"), Err(StoreError::UnknownLabel(l)) if l == "zz"));
        assert!(matches!(s.ingest_reader(CORPUS.as_bytes(), "gsw"), Err(StoreError::DuplicateGroup(_))));
        assert!(matches!(
            s.ingest_reader("not json\n".as_bytes(), "gsw"),
            Err(StoreError::MalformedRecord { line: 1, .. })
        ));
        assert_eq!(s.snapshot("gsw").unwrap().to_bytes(), before);
        assert!(matches!(s.ingest_reader(CORPUS.as_bytes(), "nope"), Err(StoreError::UnknownFamily(_))));
    }

    #[test]
    fn event_ids_are_sequential() {
        let s = store();
        s.ingest_reader(CORPUS.as_bytes(), "gsw").unwrap();
        s.register_session("s1", "gsw").unwrap();
        let a = s.record_event(NewEvent { session_id: "s1".into(), body: confirm("Ade", "g3.v1") }).unwrap();
        assert_eq!(a.event_id, 1);
        let b = s.record_event(NewEvent { session_id: "s1".into(), body: confirm("Tschau", "g3.v2") }).unwrap();
        assert_eq!(b.event_id, 2);
        assert!(matches!(
            s.record_event(NewEvent { session_id: "ghost".into(), body: confirm("x", "g3.v3") }),
            Err(StoreError::UnknownSession(_))
        ));
    }

    #[test]
    fn geo_edit_with_foreign_label_is_invalid() {
        let s = store();
        s.register_session("s1", "gsw").unwrap();
        let body = EventBody::GeoEdit {
            family_id: "gsw".into(),
            label_id: "x".into(),
            add: [HexCell::new(1, 1)].into(),
            remove: BTreeSet::new(),
        };
        assert!(matches!(
            s.record_event(NewEvent { session_id: "s1".into(), body }),
            Err(StoreError::InvalidPayload(_))
        ));
        let cross = EventBody::GeoEdit {
            family_id: "ku".into(),
            label_id: "x".into(),
            add: BTreeSet::new(),
            remove: BTreeSet::new(),
        };
        assert!(matches!(
            s.record_event(NewEvent { session_id: "s1".into(), body: cross }),
            Err(StoreError::InvalidPayload(_))
        ));
    }

    #[test]
    fn snapshots_are_isolated_from_later_writes() {
        let s = store();
        s.ingest_reader(CORPUS.as_bytes(), "gsw").unwrap();
        s.register_session("s1", "gsw").unwrap();
        let view = s.snapshot("gsw").unwrap();
        let bytes = view.to_bytes();
        s.record_event(NewEvent { session_id: "s1".into(), body: confirm("Ade", "g3.v1") }).unwrap();
        assert_eq!(view.to_bytes(), bytes);
        assert_eq!(view.group("g3").unwrap().variants.len(), 0);
        assert_eq!(s.snapshot("gsw").unwrap().group("g3").unwrap().variants.len(), 1);
    }

    #[test]
    fn empty_family_view() {
        let s = store();
        let v = s.snapshot("ku").unwrap();
        assert!(v.groups().is_empty());
        assert_eq!(v.label_set().len(), 2);
        assert!(matches!(s.snapshot("zz"), Err(StoreError::UnknownFamily(_))));
    }

    #[test]
    fn reopen_replays_log_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::fixed());
        let bytes = {
            let s = Store::open(dir.path(), clock.clone()).unwrap();
            s.register_family(registry("gsw", &["a", "b"]), None).unwrap();
            s.ingest_reader(CORPUS.as_bytes(), "gsw").unwrap();
            s.register_session("s", "gsw").unwrap();
            s.record_event(NewEvent { session_id: "s".into(), body: confirm("Ade", "g3.v1") }).unwrap();
            s.compact().unwrap();
            s.record_event(NewEvent { session_id: "s".into(), body: confirm("Tschau", "g3.v2") }).unwrap();
            s.snapshot("gsw").unwrap().to_bytes()
        };
        let reopened = Store::open(dir.path(), clock.clone()).unwrap();
        assert_eq!(reopened.snapshot("gsw").unwrap().to_bytes(), bytes);
        assert_eq!(reopened.last_event_id(), 2);
        fs::remove_file(dir.path().join(SNAPSHOT_FILE)).unwrap();
        let replayed = Store::open(dir.path(), clock).unwrap();
        assert_eq!(replayed.snapshot("gsw").unwrap().to_bytes(), bytes);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::fixed());
        {
            let s = Store::open(dir.path(), clock.clone()).unwrap();
            s.register_family(registry("gsw", &["a", "b"]), None).unwrap();
            s.ingest_reader(CORPUS.as_bytes(), "gsw").unwrap();
            s.register_session("s", "gsw").unwrap();
            s.record_event(NewEvent { session_id: "s".into(), body: confirm("Ade", "g3.v1") }).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(EVENTS_FILE)).unwrap();
        f.write_all(b"{\"event_id\":2,\"sess").unwrap();
        drop(f);
        let s = Store::open(dir.path(), clock).unwrap();
        assert_eq!(s.last_event_id(), 1);
        s.register_session("s", "gsw").unwrap();
        let r = s.record_event(NewEvent { session_id: "s".into(), body: confirm("Tschau", "g3.v2") }).unwrap();
        assert_eq!(r.event_id, 2);
        assert_eq!(read_log(&dir.path().join(EVENTS_FILE)).unwrap().len(), 2);
    }

    #[test]
    fn registering_a_conflicting_registry_fails() {
        let s = store();
        s.register_family(registry("gsw", &["a", "b", "c"]), None).unwrap();
        assert!(matches!(
            s.register_family(registry("gsw", &["q"]), None),
            Err(StoreError::DuplicateFamily(_))
        ));
    }
}
