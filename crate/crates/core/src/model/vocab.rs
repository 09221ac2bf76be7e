//! Word-level tokenizer and vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::ModelError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const FB: u32 = 4;
pub const AS: u32 = 5;
pub const SQ: u32 = 6;
pub const CA: u32 = 7;

pub const RESERVED: [&str; 8] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[FB]", "[AS]", "[SQ]", "[CA]"];

/// Lowercased runs of alphanumerics; every other non-space character is a
/// token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    learned: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Frequency-ranked vocabulary over `texts`, ties broken
    /// lexicographically, capped at `max_size` ids including reserved ones.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self, ModelError> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut any = false;
        for text in texts {
            any = true;
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if !any || counts.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size.saturating_sub(RESERVED.len()));
        Ok(Self::from_learned(ranked.into_iter().map(|(t, _)| t).collect()))
    }

    pub fn from_learned(learned: Vec<String>) -> Self {
        let mut index: HashMap<String, u32> = RESERVED
            .iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i as u32))
            .collect();
        for (i, t) in learned.iter().enumerate() {
            index.insert(t.clone(), (RESERVED.len() + i) as u32);
        }
        Self { learned, index }
    }

    pub fn len(&self) -> usize {
        RESERVED.len() + self.learned.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        let id = id as usize;
        if id < RESERVED.len() {
            Some(RESERVED[id])
        } else {
            self.learned.get(id - RESERVED.len()).map(String::as_str)
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// File form: one learned token per line; line `n` holds id `8 + n`.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.learned {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_file_string(s: &str) -> Self {
        Self::from_learned(s.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_file_string())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::from_file_string(&fs::read_to_string(path)?))
    }

    /// Hex SHA-256 of the vocabulary file contents.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Cats, DOGS!  x2"), vec!["cats", ",", "dogs", "!", "x2"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn most_frequent_gets_lowest_learned_id() {
        let v = Vocabulary::build(["a a b"], 10).unwrap();
        assert_eq!(v.id("a"), 8);
        assert_eq!(v.id("b"), 9);
        assert_eq!(v.len(), 10);
    }

    #[test]
    fn ties_broken_lexicographically_and_truncated() {
        let v = Vocabulary::build(["z y x x"], 11).unwrap();
        assert_eq!(v.id("x"), 8);
        assert_eq!(v.id("y"), 9);
        assert_eq!(v.id("z"), 10);
        let small = Vocabulary::build(["z y x x"], 9).unwrap();
        assert_eq!(small.len(), 9);
        assert_eq!(small.id("y"), UNK);
    }

    #[test]
    fn unknown_maps_to_unk_and_reserved_are_fixed() {
        let v = Vocabulary::build(["hello world"], 100).unwrap();
        assert_eq!(v.id("missing"), UNK);
        for (i, t) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(t), i as u32);
            assert_eq!(v.token(i as u32), Some(*t));
        }
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(Vocabulary::build(Vec::<&str>::new(), 10), Err(ModelError::EmptyCorpus)));
        assert!(matches!(Vocabulary::build(["  "], 10), Err(ModelError::EmptyCorpus)));
    }

    #[test]
    fn deterministic_and_file_round_trip() {
        let texts = ["the cat sat on the mat", "a dog, the end."];
        let a = Vocabulary::build(texts, 50).unwrap();
        let b = Vocabulary::build(texts, 50).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let back = Vocabulary::from_file_string(&a.to_file_string());
        assert_eq!(back, a);
        for id in 0..a.len() as u32 {
            assert_eq!(back.id(a.token(id).unwrap()), id);
        }
    }
}
