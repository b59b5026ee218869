//! Entropy difficulty on the 8-dialect family: per-label breakdown of the
//! hardest and easiest group, tier sizes, and what the sampler serves.
//!
//! cargo run --release --example difficulty_tiers

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dialingle::classifier::{train, Dataset, ModelConfig};
use dialingle::corpus::Store;
use dialingle::selection::{difficulty_breakdown, max_entropy, next_sentence, rescore_all, Tier};
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fam = SyntheticFamily::octo(200, 0);
    let store = Store::in_memory(Arc::new(ManualClock::fixed()));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
    let mut lines = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    store.ingest_reader(&lines[..], "octo")?;
    let view = store.snapshot("octo")?;
    let data = Dataset::from_view(&view);
    let model = train(&data.items, &data.label_index, &ModelConfig::default())?;

    let table = rescore_all(&view, &model, 1)?;
    let k = view.label_set().len();
    println!("{} groups, |K| = {k}, D ranges over [0, {:.3}]", table.records.len(), k as f64 * max_entropy(k));
    println!("tier sizes {:?}, mean D {:.3}", table.counts(), table.mean_score());

    let mut sorted = table.records.clone();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    for rec in [sorted.first().unwrap(), sorted.last().unwrap()] {
        let group = view.group(&rec.group_id).unwrap();
        println!("\n{} {:?} D = {:.3}: {}", rec.group_id, rec.tier, rec.score, group.standard_text);
        for c in difficulty_breakdown(group, &model, &view.label_set())? {
            println!("  {:>14} {:.3} {:?}", c.label_id, c.value, c.basis);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut seen = BTreeSet::new();
    let served: Vec<Tier> = (0..60).map(|_| next_sentence(&table, &mut seen, Tier::Hard, &mut rng).unwrap().1).collect();
    let hard = served.iter().filter(|t| **t == Tier::Hard).count();
    println!("\n60 requests for HARD: {hard} hard, then fallback to {:?}", served.last().unwrap());
    Ok(())
}
