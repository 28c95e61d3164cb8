use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::special::{SPECIAL_TOKENS, UNK};
use crate::error::{Error, Result};

/// Token ↔ id mapping. Ids are dense; special tokens occupy the first ids
/// in the order of [`SPECIAL_TOKENS`], so `[PAD]` is 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Vocabulary holding only the special tokens.
    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Invalid(format!("vocabulary id {i} must be {special}")));
            }
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!("vocabulary token {i} is empty or contains whitespace")));
            }
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Self { tokens, token_to_id })
    }

    /// Builds a vocabulary from normalized texts. Every character seen gets
    /// its own entry so out-of-vocabulary words can fall back to characters;
    /// words seen at least `min_count` times follow, most frequent first, up
    /// to `max_words`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_words: usize) -> Self {
        let mut chars = BTreeSet::new();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for piece in super::pre_tokenize(text) {
                if SPECIAL_TOKENS.contains(&piece) {
                    continue;
                }
                for c in piece.chars() {
                    chars.insert(c.to_string());
                }
                if piece.chars().count() > 1 {
                    *counts.entry(piece.to_string()).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(max_words);

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(chars.into_iter().filter(|c| !SPECIAL_TOKENS.contains(&c.as_str())));
        tokens.extend(words.into_iter().map(|(w, _)| w));
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    /// [`Vocabulary::build`] over the normalized texts of every post.
    pub fn from_dataset(dataset: &crate::corpus::Dataset, min_count: usize, max_words: usize) -> Self {
        let texts: Vec<String> =
            dataset.threads.iter().flat_map(|t| &t.posts).map(|p| super::normalize(&p.raw_text)).collect();
        Self::build(texts.iter().map(String::as_str), min_count, max_words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Id of a special token.
    ///
    /// # Panics
    /// If `token` is not one of [`SPECIAL_TOKENS`].
    pub fn special(&self, token: &str) -> u32 {
        let pos = SPECIAL_TOKENS.iter().position(|s| *s == token).expect("not a special token");
        pos as u32
    }

    pub fn unk(&self) -> u32 {
        self.special(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// One token per line, line order = id. Lines starting with `#` are
    /// comments; tokens that start with `#` or `\` are escaped with `\`.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# rumorstance vocabulary: one token per line, line order is the id\n");
        for t in &self.tokens {
            if t.starts_with('#') || t.starts_with('\\') {
                out.push('\\');
            }
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens = text
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.strip_prefix('\\').unwrap_or(l).to_string())
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// SHA-256 of the file representation, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::special::{CLS, PAD};

    #[test]
    fn specials_first_and_pad_zero() {
        let v = Vocabulary::build(["hello world [EOS]"], 1, 100);
        assert_eq!(v.id(PAD), Some(0));
        assert_eq!(v.special(CLS), 2);
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.id(s), Some(i as u32));
        }
        assert!(v.id("hello").is_some());
        assert!(v.id("h").is_some());
    }

    #[test]
    fn file_round_trip_with_hash_tokens() {
        let v = Vocabulary::build(["#tag \\ back ## x"], 1, 100);
        assert!(v.id("#").is_some());
        let text = v.to_file_string();
        let back = Vocabulary::parse(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
    }

    #[test]
    fn rejects_wrong_special_layout() {
        assert!(Vocabulary::parse("[CLS]\n[PAD]\n").is_err());
    }

    #[test]
    fn min_count_and_cap() {
        let v = Vocabulary::build(["aa aa aa bb bb cc"], 2, 1);
        assert!(v.id("aa").is_some());
        assert!(v.id("bb").is_none());
        assert!(v.id("cc").is_none());
    }
}
