//! Serves the HTTP API on the bundled families from an in-memory store,
//! with permissive CORS for a local front end.
//!
//! cargo run --release --example serve -- [addr]
//! curl localhost:8080/api/families

use std::sync::Arc;

use dialingle::api::{serve, AppState};
use dialingle::corpus::Store;
use dialingle::game::{Engine, EngineConfig};
use dialingle::synth::SyntheticFamily;
use dialingle::text::SystemClock;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let store = Arc::new(Store::in_memory(Arc::new(SystemClock)));
    for fam in [SyntheticFamily::tri(300, 0), SyntheticFamily::octo(300, 0), SyntheticFamily::duo(300, 0)] {
        store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
        let mut lines = Vec::new();
        for r in &fam.records {
            serde_json::to_writer(&mut lines, r)?;
            lines.push(b'\n');
        }
        store.ingest_reader(&lines[..], fam.family_id())?;
    }
    let engine = Engine::new(store, EngineConfig::default());
    tokio::task::spawn_blocking({
        let engine = engine.clone();
        move || engine.warm_up()
    })
    .await??;
    println!("listening on http://{addr}");
    serve(AppState { engine, async_retrain: false }, addr, &[]).await?;
    Ok(())
}
