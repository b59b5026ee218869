//! One player's Quiz session against the engine: rewrite, predict, confirm
//! or correct, and watch the level and the corpus change.
//!
//! cargo run --release --example quiz_session

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dialingle::corpus::Store;
use dialingle::game::{Correction, Engine, EngineConfig, GeoEditRequest, RetrainMode};
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fam = SyntheticFamily::tri(120, 0);
    let store = Arc::new(Store::in_memory(Arc::new(ManualClock::fixed())));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
    let mut lines = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    store.ingest_reader(&lines[..], "tri")?;

    let engine = Engine::new(store, EngineConfig { retrain_mode: RetrainMode::Inline, seed: Some(0), ..Default::default() });
    let session = engine.start_session("tri", true, Some(42))?;
    println!("session {} starts at {:?}", session.session_id, session.level);
    let speaker = fam.speaker("tri-lake").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    for round in 1..=4 {
        let prompt = engine.begin_quiz_turn(&session.session_id)?;
        let rewrite = speaker.rewrite(&prompt.standard_text, &mut rng);
        let result = engine.submit_rewrite(&session.session_id, &rewrite)?;
        println!("\nround {round} [{:?}] {}", prompt.tier, prompt.standard_text);
        println!("  wrote   {rewrite}");
        println!("  guessed {:?}", result.predicted_labels);
        let review = if result.predicted_labels == ["tri-lake"] {
            engine.review_confirm(&session.session_id)?
        } else {
            engine.review_correct(&session.session_id, Correction::Label("tri-lake".into()), None)?
        };
        println!("  stored {} -> level {:?}", review.variant_id, review.new_level);
    }

    // A dialect the game does not know yet, placed with a lasso.
    let prompt = engine.begin_quiz_turn(&session.session_id)?;
    engine.submit_rewrite(&session.session_id, &format!("{} hoi zäme", prompt.standard_text))?;
    let edit = GeoEditRequest { lasso: Some(vec![(9.6, 47.2), (10.3, 47.2), (10.3, 47.7), (9.6, 47.7)]), ..Default::default() };
    let review = engine.review_correct(&session.session_id, Correction::NewDialect("Upland".into()), Some(edit))?;
    println!(
        "\nnew dialect {} from events {:?}, model retrained to {:?}",
        review.label_id.unwrap(),
        review.event_ids,
        review.retrained_to
    );
    let stats = engine.stats("tri")?;
    println!("corpus: {} variants, {} labels, {} contributions", stats.variants, stats.labels, stats.contributions);
    println!("suggestions for \"ka\": {:?}", engine.suggest_words("tri", "ka")?);
    Ok(())
}
