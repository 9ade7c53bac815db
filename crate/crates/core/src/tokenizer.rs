//! Toy tokenizers for the reference trainer.
//!
//! Two flavors: a lossless character tokenizer (decode is exact) and a
//! whitespace word tokenizer that keeps the vocabulary small enough for the
//! tiny model (decode joins tokens with single spaces). Both reserve id 0
//! for padding and id 1 for end-of-sequence.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
const SPECIALS: u32 = 2;

pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<u32>>;
    fn decode(&self, tokens: &[u32]) -> String;

    fn eos_id(&self) -> u32 {
        EOS_ID
    }

    fn pad_id(&self) -> u32 {
        PAD_ID
    }
}

/// Character-level tokenizer; `decode(encode(text)) == text` for any text
/// built from the construction corpus.
pub struct CharTokenizer {
    to_id: BTreeMap<char, u32>,
    to_char: Vec<char>,
}

impl CharTokenizer {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut chars: Vec<char> = texts
            .iter()
            .flat_map(|t| t.as_ref().chars())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        let to_id = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + SPECIALS))
            .collect();
        CharTokenizer { to_id, to_char: chars }
    }
}

impl Tokenizer for CharTokenizer {
    fn vocab_size(&self) -> usize {
        self.to_char.len() + SPECIALS as usize
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .map(|c| {
                self.to_id.get(&c).copied().ok_or_else(|| {
                    Error::validation(format!("character {c:?} not in vocabulary"))
                })
            })
            .collect()
    }

    fn decode(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .filter_map(|&t| {
                if t < SPECIALS {
                    None
                } else {
                    self.to_char.get((t - SPECIALS) as usize).copied()
                }
            })
            .collect()
    }
}

/// Whitespace word tokenizer. Words are whitespace-separated chunks with
/// punctuation attached; decode joins with single spaces, so it normalizes
/// whitespace rather than round-tripping it.
pub struct WordTokenizer {
    to_id: BTreeMap<String, u32>,
    to_word: Vec<String>,
}

impl WordTokenizer {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut words: Vec<String> = texts
            .iter()
            .flat_map(|t| t.as_ref().split_whitespace())
            .map(|w| w.to_string())
            .collect();
        words.sort_unstable();
        words.dedup();
        let to_id = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + SPECIALS))
            .collect();
        WordTokenizer { to_id, to_word: words }
    }
}

impl Tokenizer for WordTokenizer {
    fn vocab_size(&self) -> usize {
        self.to_word.len() + SPECIALS as usize
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace()
            .map(|w| {
                self.to_id.get(w).copied().ok_or_else(|| {
                    Error::validation(format!("word {w:?} not in vocabulary"))
                })
            })
            .collect()
    }

    fn decode(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .filter_map(|&t| {
                if t < SPECIALS {
                    None
                } else {
                    self.to_word.get((t - SPECIALS) as usize).map(|w| w.as_str())
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_round_trip_is_exact() {
        let tok = CharTokenizer::from_texts(&["hello world", "Δ unicode 🎲"]);
        for text in ["hello world", "Δ 🎲 hold", ""] {
            let ids = tok.encode(text).unwrap();
            assert_eq!(tok.decode(&ids), text);
        }
    }

    #[test]
    fn unknown_symbols_error() {
        let tok = CharTokenizer::from_texts(&["abc"]);
        assert!(tok.encode("abz").is_err());
        let tok = WordTokenizer::from_texts(&["alpha beta"]);
        assert!(tok.encode("alpha gamma").is_err());
    }

    #[test]
    fn word_decode_normalizes_whitespace() {
        let tok = WordTokenizer::from_texts(&["a b c"]);
        let ids = tok.encode("a\n b  c").unwrap();
        assert_eq!(tok.decode(&ids), "a b c");
    }

    #[test]
    fn specials_are_reserved() {
        let tok = CharTokenizer::from_texts(&["ab"]);
        let ids = tok.encode("ab").unwrap();
        assert!(ids.iter().all(|&t| t >= 2));
        assert_eq!(tok.decode(&[PAD_ID, EOS_ID]), "");
    }
}
