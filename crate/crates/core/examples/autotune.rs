//! Random search over classifier settings under a size cap, on the
//! 8-dialect family where the default settings leave room to improve.
//!
//! cargo run --release --example autotune -- [budget-secs] [max-bytes]

use std::sync::Arc;
use std::time::Duration;

use dialingle::classifier::{autotune, evaluate, Budget, Dataset};
use dialingle::corpus::Store;
use dialingle::synth::SyntheticFamily;
use dialingle::text::ManualClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let secs: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let max_bytes: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1 << 20);

    let fam = SyntheticFamily::octo(300, 0);
    let store = Store::in_memory(Arc::new(ManualClock::fixed()));
    store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
    let mut lines = Vec::new();
    for r in &fam.records {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    store.ingest_reader(&lines[..], "octo")?;
    let data = Dataset::from_view(&store.snapshot("octo")?);

    let outcome = autotune(&data, Budget::WallClock(Duration::from_secs(secs)), max_bytes, 0)?;
    let c = &outcome.config;
    println!("{} candidates in {secs}s under {max_bytes} bytes", outcome.candidates_tried);
    println!(
        "best: chars {}..={}, words {}, buckets {}, dim {}, lr {:.3}, epochs {}",
        c.char_ngram_min, c.char_ngram_max, c.word_ngram_max, c.hash_buckets, c.embedding_dim, c.learning_rate, c.epochs
    );
    println!("validation micro-F1 {:.3}, model {} bytes", outcome.report.micro_f1, outcome.model.byte_size());
    let fresh = evaluate(&outcome.model, &fam.holdout(100, 3))?;
    println!("fresh sentences micro-F1 {:.3}", fresh.micro_f1);
    Ok(())
}
