use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracing::debug;

use super::format::serialized_size;
use super::{evaluate, split_train_test, train, ClassifierError, Dataset, EvalReport, ModelConfig, TrainedModel};

/// How long the random search may run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    WallClock(Duration),
    /// Fixed number of candidates; reproducible across machines.
    Candidates(usize),
}

#[derive(Debug, Clone)]
pub struct AutotuneOutcome {
    pub config: ModelConfig,
    pub model: TrainedModel,
    /// Validation report of the chosen candidate.
    pub report: EvalReport,
    pub candidates_tried: usize,
}

fn sample_config(rng: &mut ChaCha8Rng, seed: u64) -> ModelConfig {
    const DIMS: [u32; 8] = [4, 8, 12, 16, 24, 32, 48, 64];
    let char_ngram_min = rng.gen_range(1..=3);
    let char_ngram_max = rng.gen_range(char_ngram_min..=(char_ngram_min + 3).min(6));
    ModelConfig {
        char_ngram_min,
        char_ngram_max,
        word_ngram_max: rng.gen_range(1..=2),
        hash_buckets: 1 << rng.gen_range(12..=18),
        embedding_dim: DIMS[rng.gen_range(0..DIMS.len())],
        learning_rate: (rng.gen_range(0.05f64.ln()..1.0f64.ln())).exp(),
        epochs: rng.gen_range(5..=30),
        seed,
    }
}

/// Seeded random search over [`ModelConfig`]. The minimal configuration is
/// tried first; candidates whose file would exceed `max_model_bytes` are
/// skipped without training. Each candidate trains on 80% of `data` and is
/// scored by micro-F1 on the remaining 20%. The search stops early once a
/// candidate scores a perfect 1.0.
pub fn autotune(
    data: &Dataset,
    budget: Budget,
    max_model_bytes: u64,
    seed: u64,
) -> Result<AutotuneOutcome, ClassifierError> {
    if data.observed_labels().len() < 2 {
        return Err(ClassifierError::SingleClassCorpus);
    }
    let minimal = ModelConfig::minimal(seed);
    if serialized_size(&minimal, &data.label_index) > max_model_bytes {
        return Err(ClassifierError::NoFeasibleModel { max_bytes: max_model_bytes });
    }
    let split = split_train_test(&data.items, 0.8, seed);
    let validation = if split.test.is_empty() { &split.train } else { &split.test };

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a070);
    let mut best: Option<AutotuneOutcome> = None;
    let mut tried = 0usize;
    loop {
        let more = match budget {
            Budget::WallClock(limit) => tried == 0 || started.elapsed() < limit,
            Budget::Candidates(n) => tried < n.max(1),
        };
        if !more {
            break;
        }
        let config = if tried == 0 { minimal.clone() } else { sample_config(&mut rng, seed) };
        tried += 1;
        if serialized_size(&config, &data.label_index) > max_model_bytes {
            continue;
        }
        let model = train(&split.train, &data.label_index, &config)?;
        let report = evaluate(&model, validation)?.with_split_seed(seed);
        debug!(candidate = tried, f1 = report.micro_f1, ?config, "autotune candidate");
        let better = best.as_ref().is_none_or(|b| report.micro_f1 > b.report.micro_f1);
        if better {
            let perfect = report.micro_f1 >= 1.0;
            best = Some(AutotuneOutcome { config, model, report, candidates_tried: tried });
            if perfect {
                break;
            }
        }
    }
    let mut out = best.expect("the minimal config always trains");
    out.candidates_tried = tried;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LabeledText;

    fn noisy(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut items = Vec::new();
        for (label, alphabet) in [("x", "abcdefg"), ("y", "defghij")] {
            let chars: Vec<char> = alphabet.chars().collect();
            for i in 0..n {
                let t: String = (0..8).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
                items.push(LabeledText::new(format!("{label}{i}"), t, &[label]));
            }
        }
        Dataset { items, label_index: vec!["x".into(), "y".into()] }
    }

    #[test]
    fn infeasible_cap() {
        assert!(matches!(
            autotune(&noisy(10), Budget::Candidates(3), 1, 0),
            Err(ClassifierError::NoFeasibleModel { .. })
        ));
    }

    #[test]
    fn single_class() {
        let mut d = noisy(10);
        d.items.retain(|i| i.labels.contains("x"));
        assert!(matches!(
            autotune(&d, Budget::Candidates(3), 1 << 21, 0),
            Err(ClassifierError::SingleClassCorpus)
        ));
    }

    #[test]
    fn candidate_budget_is_deterministic_and_capped() {
        let d = noisy(40);
        let a = autotune(&d, Budget::Candidates(6), 1 << 20, 42).unwrap();
        let b = autotune(&d, Budget::Candidates(6), 1 << 20, 42).unwrap();
        assert_eq!(a.config, b.config);
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert!(a.model.byte_size() <= 1 << 20);
    }
}
