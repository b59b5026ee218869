//! Sentence normalization and the injectable clock.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use unicode_normalization::UnicodeNormalization;

/// NFC, trimmed, with internal whitespace runs collapsed to one space.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased word tokens used for suggestions and word n-grams.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that advances a fixed step on every read.
#[derive(Debug, Clone)]
pub struct ManualClock {
    millis: Arc<AtomicI64>,
    step_ms: i64,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            millis: Arc::new(AtomicI64::new(start.timestamp_millis())),
            step_ms,
        }
    }

    /// 2024-01-01T00:00:00Z, one second per tick.
    pub fn fixed() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(), 1000)
    }

    pub fn advance_ms(&self, ms: i64) {
        self.millis.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = self.millis.fetch_add(self.step_ms, Ordering::SeqCst);
        Utc.timestamp_millis_opt(ms).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_composes() {
        assert_eq!(normalize("  gr\u{0075}\u{0308}ezi \t  mitenand\n"), "grüezi mitenand");
        assert_eq!(normalize(" \n "), "");
    }

    #[test]
    fn words_are_case_folded() {
        let w: Vec<_> = words("Grüezi, mitenand! D'Chuchi").collect();
        assert_eq!(w, vec!["grüezi", "mitenand", "d'chuchi"]);
    }

    #[test]
    fn manual_clock_ticks() {
        let c = ManualClock::fixed();
        let a = c.now();
        let b = c.now();
        assert_eq!((b - a).num_milliseconds(), 1000);
    }
}
