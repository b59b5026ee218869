//! Crash safety of the event log. A child process records events against a
//! data directory and aborts without any cleanup; the parent reopens the
//! directory and must rebuild exactly the state the child had.

mod common;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use common::{clock, drive_events, inline_engine};
use dialingle::corpus::Store;
use dialingle::synth::SyntheticFamily;

const DIR_VAR: &str = "DIALINGLE_CRASH_DIR";
const EVENTS: u64 = 50;

fn seeded_dir(dir: &Path) {
    let fam = SyntheticFamily::tri(30, 4);
    let files = fam.write_to(dir.join("in")).unwrap();
    let store = Store::open(dir.join("data"), clock()).unwrap();
    let registry = serde_json::from_str(&std::fs::read_to_string(files.registry).unwrap()).unwrap();
    let divisions = serde_json::from_str(&std::fs::read_to_string(files.divisions).unwrap()).unwrap();
    store.register_family(registry, Some(divisions)).unwrap();
    store.ingest_corpus(files.corpus, "tri").unwrap();
}

/// Runs only inside the child process started by the tests below.
#[test]
fn crash_child() {
    let Ok(dir) = std::env::var(DIR_VAR) else { return };
    let dir = Path::new(&dir);
    let store = Arc::new(Store::open(dir.join("data"), clock()).unwrap());
    let engine = inline_engine(store.clone());
    drive_events(&engine, "tri", EVENTS);
    std::fs::write(dir.join("expected.bin"), store.snapshot("tri").unwrap().to_bytes()).unwrap();
    std::fs::write(dir.join("expected_events"), store.last_event_id().to_string()).unwrap();
    std::process::abort();
}

fn run_crashing_child(dir: &Path) {
    let status = Command::new(std::env::current_exe().unwrap())
        .args(["--exact", "crash_child", "--nocapture", "--test-threads=1"])
        .env(DIR_VAR, dir)
        .status()
        .unwrap();
    assert!(!status.success(), "child was expected to abort");
}

#[test]
fn killed_writer_replays_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    seeded_dir(tmp.path());
    run_crashing_child(tmp.path());

    let expected = std::fs::read(tmp.path().join("expected.bin")).unwrap();
    let last: u64 = std::fs::read_to_string(tmp.path().join("expected_events")).unwrap().parse().unwrap();
    assert!(last >= EVENTS);

    let store = Store::open(tmp.path().join("data"), clock()).unwrap();
    assert_eq!(store.last_event_id(), last);
    assert_eq!(store.snapshot("tri").unwrap().to_bytes(), expected);

    // Compaction must not change what a later open sees.
    store.compact().unwrap();
    drop(store);
    let store = Store::open(tmp.path().join("data"), clock()).unwrap();
    assert_eq!(store.snapshot("tri").unwrap().to_bytes(), expected);
    assert_eq!(store.last_event_id(), last);
}

#[test]
fn torn_tail_is_dropped() {
    let tmp = tempfile::tempdir().unwrap();
    seeded_dir(tmp.path());
    run_crashing_child(tmp.path());
    let expected = std::fs::read(tmp.path().join("expected.bin")).unwrap();

    let log = tmp.path().join("data").join("events.jsonl");
    let mut f = OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(br#"{"event_id":999,"session_id":"x","kind":"CONF"#).unwrap();
    drop(f);

    let store = Store::open(tmp.path().join("data"), clock()).unwrap();
    assert_eq!(store.snapshot("tri").unwrap().to_bytes(), expected);
    // The torn line is gone, so new events append cleanly after it.
    let engine = inline_engine(Arc::new(store));
    let before = engine.store().last_event_id();
    drive_events(&engine, "tri", before + 3);
    drop(engine);
    let store = Store::open(tmp.path().join("data"), clock()).unwrap();
    assert!(store.last_event_id() >= before + 3);
}
