//! Writes a synthetic dialect family (registry, corpus, divisions) to disk
//! and shows what one speaker does to a standard sentence.
//!
//! cargo run --example generate_synthetic -- [tri|octo|duo] [out-dir]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dialingle::synth::SyntheticFamily;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "tri".into());
    let out = args.next().unwrap_or_else(|| format!("target/synthetic/{name}"));
    let fam = SyntheticFamily::by_name(&name, 50, 0).expect("family is one of tri, octo, duo");

    let files = fam.write_to(&out)?;
    println!("{} ({}): {} groups, {} dialects", fam.registry.family.display_name, fam.family_id(), fam.records.len(), fam.speakers.len());
    println!("  {}\n  {}\n  {}", files.registry.display(), files.corpus.display(), files.divisions.display());

    let standard = &fam.records[0].standard;
    println!("\nstandard: {standard}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for speaker in &fam.speakers {
        println!("{:>16}: {}", speaker.label_id, speaker.rewrite(standard, &mut rng));
    }
    Ok(())
}
