use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 300;

/// Word vectors of dimension 300. Lookups are lower-cased; unknown words
/// have no vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    vectors: HashMap<String, Vec<f64>>,
}

/// The `<count> <dim>` first line of word2vec text files.
fn is_count_header(line: &str) -> bool {
    let fields: Vec<&str> = line.split_whitespace().collect();
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != EMBEDDING_DIM {
            return Err(Error::Invalid(format!(
                "embedding for '{word}' has dimension {} (expected {EMBEDDING_DIM})",
                vector.len()
            )));
        }
        self.vectors.insert(word.to_lowercase(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Parses `word v1 … v300` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 && is_count_header(line) {
                continue;
            }
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("embedding line {}: {e}", lineno + 1)))?;
            table.insert(word, values).map_err(|e| Error::Invalid(format!("embedding line {}: {e}", lineno + 1)))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read embeddings {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Serializes in file order sorted by word.
    pub fn to_file_string(&self) -> String {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for v in &self.vectors[w] {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Pseudo-random unit-scale vectors derived from each word's hash, for
    /// fixtures where no trained embeddings are available.
    pub fn synthetic<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = Self::new();
        for word in words {
            let word = word.to_lowercase();
            let digest = Sha256::digest(word.as_bytes());
            let mut seed = [0u8; 32];
            seed.copy_from_slice(&digest);
            let mut rng = ChaCha8Rng::from_seed(seed);
            // round to keep the text form short and exact
            let v = (0..EMBEDDING_DIM).map(|_| (rng.gen_range(-1.0..1.0f64) * 1e4).round() / 1e4).collect();
            table.vectors.insert(word, v);
        }
        table
    }
}
