//! Simulated contributors play 200 quiz rounds against an in-process server
//! on the 8-dialect synthetic family; prints the summary for a few seeds.
//!
//! cargo run --release --example simulate -- [groups] [rounds]

use std::sync::Arc;
use std::time::Instant;

use dialingle::api::{router, AppState};
use dialingle::corpus::Store;
use dialingle::game::{Engine, EngineConfig, RetrainMode};
use dialingle::sim::{simulate, RouterTransport, SimConfig};
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() {
    let mut args = std::env::args().skip(1);
    let groups: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    let rounds: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);

    for seed in 0..3u64 {
        let started = Instant::now();
        let fam = SyntheticFamily::octo(groups, 11);
        let store = Arc::new(Store::in_memory(Arc::new(ManualClock::fixed())));
        store.register_family(fam.registry.clone(), Some(fam.divisions.clone())).unwrap();
        let mut lines = Vec::new();
        for r in &fam.records {
            serde_json::to_writer(&mut lines, r).unwrap();
            lines.push(b'\n');
        }
        store.ingest_reader(&lines[..], "octo").unwrap();

        let engine = Engine::new(
            store,
            EngineConfig { retrain_mode: RetrainMode::Inline, seed: Some(seed), ..EngineConfig::default() },
        );
        let mut transport = RouterTransport::new(router(AppState { engine, async_retrain: false }, &[]));
        let config = SimConfig {
            family_id: "octo".into(),
            rounds,
            seed,
            confirm_accuracy: 0.9,
            speakers: fam.speakers.clone(),
            holdout: fam.holdout(100, 99),
        };
        let report = simulate(&mut transport, &config).unwrap();
        let s = &report.summary;
        println!(
            "seed {seed}: growth {} (log {}), f1 {:.3} -> {:.3}, versions {} -> {}, {:.1}s",
            s.corpus_growth,
            report.growth_from_log(),
            s.f1_initial,
            s.f1_final,
            s.model_version_initial,
            s.model_version_final,
            started.elapsed().as_secs_f64()
        );
    }
}
