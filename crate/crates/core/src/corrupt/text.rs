use alloc::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corrupt::sample_seed;
use crate::error::{Error, Result};
use crate::prelude::*;

/// Fraction of characters affected at levels 1–5.
pub const TEXT_RATES: [f64; 5] = [0.025, 0.05, 0.10, 0.15, 0.25];
pub const MAX_ATTEMPTS: usize = 100;
pub const MIN_SIMILARITY: f64 = 0.2;
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextOp {
    Insert,
    Drop,
    Replace,
}

impl TextOp {
    pub const ALL: [TextOp; 3] = [TextOp::Insert, TextOp::Drop, TextOp::Replace];

    pub fn name(self) -> &'static str {
        match self {
            TextOp::Insert => "insert",
            TextOp::Drop => "drop",
            TextOp::Replace => "replace",
        }
    }
}

impl core::str::FromStr for TextOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TextOp::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown text operation {s:?}")))
    }
}

pub fn text_rate(level: u8) -> Result<f64> {
    TEXT_RATES
        .get((level as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("text level {level} is outside 1..={}", TEXT_RATES.len())))
}

/// `⌈rate · len⌉`, tolerant of binary rounding in the product.
pub fn affected_positions(rate: f64, len: usize) -> usize {
    (libm::ceil(rate * len as f64 - 1e-9).max(0.0) as usize).min(len)
}

/// Similarity between an original and a corrupted string.
pub trait SimilarityOracle {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

impl<F: Fn(&str, &str) -> f64> SimilarityOracle for F {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

/// Cosine similarity of character-trigram counts.
#[derive(Clone, Copy, Debug, Default)]
pub struct NgramCosine;

impl SimilarityOracle for NgramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        ngram_cosine(a, b)
    }
}

fn trigrams(s: &str) -> BTreeMap<[char; 3], u32> {
    let padded: Vec<char> = core::iter::once('^')
        .chain(s.chars())
        .chain(core::iter::once('$'))
        .collect();
    let mut out = BTreeMap::new();
    for w in padded.windows(3) {
        *out.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    out
}

/// Cosine over character trigram counts of `^a$` and `^b$`. Two empty strings
/// are identical (1); an empty and a non-empty string share nothing (0).
pub fn ngram_cosine(a: &str, b: &str) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (ta, tb) = (trigrams(a), trigrams(b));
    let dot: f64 = ta
        .iter()
        .filter_map(|(g, &x)| tb.get(g).map(|&y| x as f64 * y as f64))
        .sum();
    let norm = |t: &BTreeMap<[char; 3], u32>| libm::sqrt(t.values().map(|&x| (x as f64) * (x as f64)).sum::<f64>());
    let denom = norm(&ta) * norm(&tb);
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TextCorruption {
    Accepted { text: String, attempts: usize },
    Excluded { attempts: usize },
}

impl TextCorruption {
    pub fn attempts(&self) -> usize {
        match self {
            TextCorruption::Accepted { attempts, .. } | TextCorruption::Excluded { attempts } => *attempts,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            TextCorruption::Accepted { text, .. } => Some(text),
            TextCorruption::Excluded { .. } => None,
        }
    }
}

fn random_char(rng: &mut impl Rng) -> char {
    ALPHABET[rng.random_range(0..ALPHABET.len())] as char
}

/// One corruption attempt touching exactly `count` positions.
pub fn apply_op(chars: &[char], op: TextOp, count: usize, rng: &mut impl Rng) -> String {
    let len = chars.len();
    match op {
        TextOp::Drop => {
            let mut keep = vec![true; len];
            for i in sample(rng, len, count.min(len)) {
                keep[i] = false;
            }
            chars.iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect()
        }
        TextOp::Replace => {
            let mut out = chars.to_vec();
            for i in sample(rng, len, count.min(len)) {
                let mut c = random_char(rng);
                while c == out[i] {
                    c = random_char(rng);
                }
                out[i] = c;
            }
            out.into_iter().collect()
        }
        TextOp::Insert => {
            // gaps 0..=len; a gap receives at most one new character
            let mut at = vec![None; len + 1];
            for g in sample(rng, len + 1, count.min(len + 1)) {
                at[g] = Some(random_char(rng));
            }
            let mut out = String::with_capacity(len + count);
            for (g, extra) in at.into_iter().enumerate() {
                if let Some(c) = extra {
                    out.push(c);
                }
                if g < len {
                    out.push(chars[g]);
                }
            }
            out
        }
    }
}

/// Corrupts `text` at `level`, retrying with fresh randomness until the
/// oracle's similarity to the original reaches [`MIN_SIMILARITY`], for at most
/// [`MAX_ATTEMPTS`] attempts.
pub fn corrupt_text(
    text: &str,
    op: TextOp,
    level: u8,
    seed: u64,
    oracle: &dyn SimilarityOracle,
) -> Result<TextCorruption> {
    corrupt_sample_text(text, "", op, level, seed, oracle)
}

/// As [`corrupt_text`] with the random stream keyed by the sample id as well.
pub fn corrupt_sample_text(
    text: &str,
    sample_id: &str,
    op: TextOp,
    level: u8,
    seed: u64,
    oracle: &dyn SimilarityOracle,
) -> Result<TextCorruption> {
    if text.is_empty() {
        return Err(Error::Empty("text to corrupt"));
    }
    let rate = text_rate(level)?;
    let chars: Vec<char> = text.chars().collect();
    let count = affected_positions(rate, chars.len());
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, sample_id, op.name(), level));
    for attempt in 1..=MAX_ATTEMPTS {
        let candidate = apply_op(&chars, op, count, &mut rng);
        if oracle.similarity(text, &candidate) >= MIN_SIMILARITY {
            return Ok(TextCorruption::Accepted {
                text: candidate,
                attempts: attempt,
            });
        }
    }
    Ok(TextCorruption::Excluded { attempts: MAX_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;

    #[test]
    fn cosine_examples() {
        assert!((ngram_cosine("the quick fox", "the quick fox") - 1.0).abs() < 1e-12);
        assert_eq!(ngram_cosine("abc", "xyz"), 0.0);
        assert_eq!(ngram_cosine("", ""), 1.0);
        assert_eq!(ngram_cosine("", "a"), 0.0);
        let e = ngram_cosine("elephant", "elephnt");
        assert!((e - 5.0 / 56f64.sqrt()).abs() < 1e-12, "{e}");
        assert!(e > 0.3 && e < 1.0);
    }

    #[test]
    fn constant_one_oracle_accepts_first_attempt() {
        let r = corrupt_text("hello world", TextOp::Replace, 3, 1, &|_: &str, _: &str| 1.0).unwrap();
        assert_eq!(r.attempts(), 1);
    }

    #[test]
    fn constant_zero_oracle_excludes_after_exactly_100() {
        let calls = Cell::new(0);
        let oracle = |_: &str, _: &str| {
            calls.set(calls.get() + 1);
            0.0
        };
        let r = corrupt_text("hello world", TextOp::Insert, 2, 1, &oracle).unwrap();
        assert_eq!(r, TextCorruption::Excluded { attempts: 100 });
        assert_eq!(calls.get(), 100);
    }

    #[test]
    fn drop_rate_tenth_of_hundred_chars() {
        let text: String = (0..100).map(|i| (b'a' + (i % 26) as u8) as char).collect();
        let r = corrupt_text(&text, TextOp::Drop, 3, 5, &|_: &str, _: &str| 1.0).unwrap();
        assert_eq!(r.text().unwrap().chars().count(), 90);
    }

    #[test]
    fn insert_and_replace_lengths() {
        let chars: Vec<char> = "abcdefghij".chars().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(apply_op(&chars, TextOp::Insert, 3, &mut rng).chars().count(), 13);
        let r = apply_op(&chars, TextOp::Replace, 4, &mut rng);
        let diff = r.chars().zip(&chars).filter(|(a, b)| a != *b).count();
        assert_eq!(diff, 4);
    }

    #[test]
    fn rounding_guard() {
        assert_eq!(affected_positions(0.1, 100), 10);
        assert_eq!(affected_positions(0.025, 10), 1);
        assert_eq!(affected_positions(0.15, 20), 3);
    }

    #[test]
    fn empty_text_and_bad_level_are_errors() {
        assert!(corrupt_text("", TextOp::Drop, 1, 0, &NgramCosine).is_err());
        assert!(corrupt_text("abc", TextOp::Drop, 6, 0, &NgramCosine).is_err());
    }
}
