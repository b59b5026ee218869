//! A Match round for a player who does not speak the dialects: place three
//! sentences on the admin-division map and get Jaccard scores back.
//!
//! cargo run --release --example match_game

use std::collections::BTreeSet;
use std::sync::Arc;

use dialingle::corpus::Store;
use dialingle::game::{Engine, EngineConfig};
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fam = SyntheticFamily::octo(60, 0);
    let store = Arc::new(Store::in_memory(Arc::new(ManualClock::fixed())));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
    let mut lines = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    store.ingest_reader(&lines[..], "octo")?;
    let divisions: Vec<String> = fam.divisions.divisions.iter().map(|d| d.division_id.clone()).collect();

    let engine = Engine::new(store.clone(), EngineConfig { seed: Some(0), ..Default::default() });
    let sid = engine.start_session("octo", false, Some(5))?.session_id;
    let round = engine.begin_match_round(&sid)?;
    for item in &round.items {
        // guess two neighbouring divisions
        let guess: BTreeSet<String> = divisions[item.index * 2..item.index * 2 + 2].iter().cloned().collect();
        let answer = engine.submit_match_answer(&sid, item.index, guess.clone())?;
        println!("{}: \"{}\"", item.variant_id, item.text);
        println!("  guessed {guess:?}\n  actual  {:?}\n  score   {:.3}", answer.reference_divisions, answer.score);
        if answer.score == 0.0 {
            let id = engine.record_match_correction(&sid, item.index, guess)?;
            println!("  disagreement stored as event {id}");
        }
    }
    let view = engine.match_round(&sid)?.unwrap();
    let total: f64 = view.items.iter().filter_map(|i| i.score).sum();
    println!("\nround complete: {}, total {total:.3} of 3", view.complete);
    Ok(())
}
