//! Opens a data directory, registers the bundled 3-dialect family, ingests
//! its seed corpus and reopens the directory to show the state survives.
//!
//! cargo run --example ingest_corpus

use std::path::Path;
use std::sync::Arc;

use dialingle::corpus::{RegistryFile, Store};
use dialingle::geo::DivisionFile;
use dialingle::text::SystemClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tri");
    let data = tempfile_dir();

    let store = Store::open(&data, Arc::new(SystemClock))?;
    let registry: RegistryFile = serde_json::from_slice(&std::fs::read(bundled.join("registry.json"))?)?;
    let divisions: DivisionFile = serde_json::from_slice(&std::fs::read(bundled.join("divisions.json"))?)?;
    store.register_family(registry, Some(divisions))?;
    let groups = store.ingest_corpus(bundled.join("corpus.jsonl"), "tri")?;
    println!("ingested {groups} groups into {}", data.display());

    // A second ingest of the same file is rejected as a whole.
    match store.ingest_corpus(bundled.join("corpus.jsonl"), "tri") {
        Ok(_) => println!("unexpected: duplicate ingest accepted"),
        Err(e) => println!("re-ingest refused: {e}"),
    }
    drop(store);

    let reopened = Store::open(&data, Arc::new(SystemClock))?;
    let view = reopened.snapshot("tri")?;
    println!("after reopen: {} groups, {} variants, labels {:?}", view.groups().len(), view.variant_count(), view.label_set());
    let g = view.groups().values().next().unwrap();
    println!("\n{}: {}", g.group_id, g.standard_text);
    for v in &g.variants {
        println!("  {:?} {}", v.labels, v.text);
    }
    std::fs::remove_dir_all(&data)?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dialingle-ingest-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}
