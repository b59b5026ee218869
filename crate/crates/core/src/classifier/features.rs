use super::ModelConfig;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn bucket(bytes: &[u8], buckets: u32) -> u32 {
    (fnv1a64(bytes) as i64).rem_euclid(i64::from(buckets)) as u32
}

/// Hashed feature ids for `text` (expected already normalized). Duplicates
/// are kept: the result is a multiset.
///
/// Character n-grams are taken inside each whitespace-separated word padded
/// with `<` and `>`. Word n-grams are hashed with a `\u{1}` prefix so they
/// never collide by construction with a character n-gram of the same bytes.
pub fn featurize(text: &str, config: &ModelConfig) -> Vec<u32> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let (lo, hi) = (config.char_ngram_min as usize, config.char_ngram_max as usize);
    let mut buf = String::new();
    for w in &words {
        let padded: Vec<char> = std::iter::once('<').chain(w.chars()).chain(std::iter::once('>')).collect();
        for n in lo..=hi {
            if n > padded.len() {
                break;
            }
            for window in padded.windows(n) {
                buf.clear();
                buf.extend(window);
                out.push(bucket(buf.as_bytes(), config.hash_buckets));
            }
        }
    }
    for n in 1..=config.word_ngram_max as usize {
        for window in words.windows(n) {
            buf.clear();
            buf.push('\u{1}');
            buf.push_str(&window.join(" "));
            out.push(bucket(buf.as_bytes(), config.hash_buckets));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lo: u8, hi: u8, words: u8) -> ModelConfig {
        ModelConfig {
            char_ngram_min: lo,
            char_ngram_max: hi,
            word_ngram_max: words,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_has_no_features() {
        assert!(featurize("", &cfg(1, 6, 2)).is_empty());
    }

    #[test]
    fn two_char_word_bigrams() {
        let c = cfg(2, 2, 0);
        let got = featurize("ab", &c);
        let mut expect: Vec<u32> = ["<a", "ab", "b>"]
            .iter()
            .map(|g| bucket(g.as_bytes(), c.hash_buckets))
            .collect();
        let mut sorted = got.clone();
        sorted.sort();
        expect.sort();
        assert_eq!(sorted, expect);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn word_ngrams_and_counts() {
        // "ab cd": per word 3 bigrams + 2 trigrams; 2 unigrams + 1 bigram
        assert_eq!(featurize("ab cd", &cfg(2, 3, 2)).len(), 2 * (3 + 2) + 3);
    }

    #[test]
    fn deterministic() {
        let c = cfg(1, 5, 2);
        assert_eq!(featurize("grüezi mitenand", &c), featurize("grüezi mitenand", &c));
        assert!(featurize("grüezi mitenand", &c).iter().all(|f| *f < c.hash_buckets));
    }
}
