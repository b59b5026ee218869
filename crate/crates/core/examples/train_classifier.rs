//! Trains the hashed n-gram classifier on the bundled 3-dialect corpus,
//! scores it on fresh sentences and round-trips it through a model file.
//!
//! cargo run --release --example train_classifier

use std::sync::Arc;

use dialingle::classifier::{evaluate, split_train_test, train_with_history, Dataset, ModelConfig, TrainedModel};
use dialingle::corpus::Store;
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fam = SyntheticFamily::tri(300, 0);
    let store = Store::in_memory(Arc::new(ManualClock::fixed()));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
    for r in &fam.records {
        store.ingest_reader(serde_json::to_string(r)?.as_bytes(), "tri")?;
    }
    let data = Dataset::from_view(&store.snapshot("tri")?);

    let split = split_train_test(&data.items, 0.8, 0);
    let config = ModelConfig::default();
    let (model, losses) = train_with_history(&split.train, &data.label_index, &config)?;
    let shown: Vec<String> = losses.iter().step_by(3).map(|l| format!("{l:.3}")).collect();
    println!("loss by epoch (every 3rd): {}", shown.join(" "));

    let report = evaluate(&model, &split.test)?;
    println!("20% split: micro-F1 {:.3}, macro-F1 {:.3}", report.micro_f1, report.macro_f1);
    let fresh = evaluate(&model, &fam.holdout(100, 5))?;
    for (label, s) in &fresh.per_class {
        println!("  {label:>10}  p {:.3}  r {:.3}  f1 {:.3}  n {}", s.precision, s.recall, s.f1, s.support);
    }

    let path = std::env::temp_dir().join("dialingle-example.dlg");
    model.save(&path)?;
    let loaded = TrainedModel::load(&path)?;
    let sentence = &fam.holdout(1, 9)[0];
    println!("\n{} bytes on disk; \"{}\" ({:?})", std::fs::metadata(&path)?.len(), sentence.text, sentence.labels);
    for (label, p) in loaded.predict(&sentence.text).ranked() {
        println!("  {label:>10} {p:.3}");
    }
    std::fs::remove_file(path)?;
    Ok(())
}
