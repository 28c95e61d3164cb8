//! Conversation threads, labels and datasets.
//!
//! A thread is stored flattened in temporal order with the source post first.
//! Tree structure is kept through `parent_id`, which always points at an
//! earlier post in the same thread.

mod counts;
mod fixture;
mod rumoreval;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use counts::{label_counts, published_counts, validate_counts, CountMismatch, CountReport, ExpectedCounts};
pub use fixture::{case_study_thread, make_fixture_corpus};
pub use rumoreval::{load_rumoreval, Ingest, IngestReport};

/// Body used for posts whose text was removed or is empty.
pub const DELETED_TEXT: &str = "$deleted$";

/// Version tag written into every serialized corpus file.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Twitter,
    Reddit,
}

/// Stance of a post towards the rumor. Discriminants are the class indices
/// used by the stance head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Support = 0,
    Comment = 1,
    Deny = 2,
    Query = 3,
}

impl Stance {
    pub const ALL: [Stance; 4] = [Stance::Support, Stance::Comment, Stance::Deny, Stance::Query];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stance::Support => "support",
            Stance::Comment => "comment",
            Stance::Deny => "deny",
            Stance::Query => "query",
        }
    }
}

/// Veracity of the rumor a thread discusses. Discriminants are the class
/// indices used by the veracity head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Veracity {
    True = 0,
    False = 1,
    Unverified = 2,
}

impl Veracity {
    pub const ALL: [Veracity; 3] = [Veracity::True, Veracity::False, Veracity::Unverified];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Veracity::True => "true",
            Veracity::False => "false",
            Veracity::Unverified => "unverified",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "support" | "supporting" => Ok(Stance::Support),
            "comment" | "commenting" => Ok(Stance::Comment),
            "deny" | "denying" => Ok(Stance::Deny),
            "query" | "querying" => Ok(Stance::Query),
            other => Err(Error::Invalid(format!("unknown stance label '{other}'"))),
        }
    }
}

impl FromStr for Veracity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Veracity::True),
            "false" => Ok(Veracity::False),
            "unverified" => Ok(Veracity::Unverified),
            other => Err(Error::Invalid(format!("unknown veracity label '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_meta: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Epoch seconds.
    pub timestamp: i64,
    pub platform: Platform,
}

impl Post {
    pub fn is_source(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.author_meta.as_ref()?.get(key).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationThread {
    pub posts: Vec<Post>,
    /// Aligned to `posts`. Posts missing from the label keys hold `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_labels: Option<Vec<Option<Stance>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veracity_label: Option<Veracity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veracity_confidence: Option<f64>,
}

impl ConversationThread {
    /// Thread id, which is the source post id.
    pub fn id(&self) -> &str {
        &self.posts[0].id
    }

    pub fn source(&self) -> &Post {
        &self.posts[0]
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn stance(&self, post_idx: usize) -> Option<Stance> {
        self.stance_labels.as_ref()?.get(post_idx).copied().flatten()
    }

    /// Depth of every post in the reply tree; the source has depth 0.
    pub fn depths(&self) -> Vec<usize> {
        let index: HashMap<&str, usize> = self.posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let mut depths = vec![0usize; self.posts.len()];
        for (i, post) in self.posts.iter().enumerate() {
            if let Some(parent) = post.parent_id.as_deref() {
                // parents precede children, so the parent depth is final
                depths[i] = index.get(parent).map_or(1, |&p| depths[p] + 1);
            }
        }
        depths
    }

    /// Checks the structural invariants: a single root at position 0,
    /// parents that resolve to earlier posts, non-decreasing timestamps and
    /// label alignment.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.posts.first() else {
            return Err(Error::Invalid("thread has no posts".into()));
        };
        if first.parent_id.is_some() {
            return Err(Error::Invalid(format!("thread {}: first post is not a source", first.id)));
        }
        let mut seen = HashSet::new();
        let mut last_ts = i64::MIN;
        for (i, post) in self.posts.iter().enumerate() {
            if i > 0 {
                match post.parent_id.as_deref() {
                    None => {
                        return Err(Error::Invalid(format!(
                            "thread {}: post {} has no parent but is not the source",
                            first.id, post.id
                        )))
                    }
                    Some(parent) if !seen.contains(parent) => {
                        return Err(Error::Invalid(format!(
                            "thread {}: parent {parent} of post {} does not precede it",
                            first.id, post.id
                        )))
                    }
                    _ => {}
                }
            }
            if post.timestamp < last_ts {
                return Err(Error::Invalid(format!("thread {}: timestamps decrease at post {}", first.id, post.id)));
            }
            last_ts = post.timestamp;
            if !seen.insert(post.id.as_str()) {
                return Err(Error::Invalid(format!("thread {}: duplicate post id {}", first.id, post.id)));
            }
        }
        if let Some(labels) = &self.stance_labels {
            if labels.len() != self.posts.len() {
                return Err(Error::Invalid(format!(
                    "thread {}: {} stance labels for {} posts",
                    first.id,
                    labels.len(),
                    self.posts.len()
                )));
            }
        }
        if let Some(c) = self.veracity_confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Invalid(format!("thread {}: veracity confidence {c} outside [0,1]", first.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub split: Split,
    pub threads: Vec<ConversationThread>,
}

impl Dataset {
    pub fn new(split: Split, threads: Vec<ConversationThread>) -> Self {
        Self { split, threads }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for thread in &self.threads {
            thread.validate()?;
            if !ids.insert(thread.id()) {
                return Err(Error::Invalid(format!(
                    "duplicate thread id {} in {} split",
                    thread.id(),
                    self.split.name()
                )));
            }
        }
        Ok(())
    }

    pub fn n_posts(&self) -> usize {
        self.threads.iter().map(ConversationThread::len).sum()
    }
}

/// On-disk layout of the canonical corpus file.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusFile {
    schema_version: String,
    datasets: Vec<Dataset>,
}

/// Serializes datasets into the canonical single-file JSON form.
pub fn to_canonical_json(datasets: &[Dataset]) -> Result<String> {
    let file = CorpusFile { schema_version: SCHEMA_VERSION.to_string(), datasets: datasets.to_vec() };
    let mut out = serde_json::to_string_pretty(&file)?;
    out.push('\n');
    Ok(out)
}

pub fn from_canonical_json(text: &str) -> Result<Vec<Dataset>> {
    let file: CorpusFile = serde_json::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported corpus schema version '{}' (expected '{SCHEMA_VERSION}')",
            file.schema_version
        )));
    }
    for ds in &file.datasets {
        ds.validate()?;
    }
    Ok(file.datasets)
}

pub fn write_corpus(path: &Path, datasets: &[Dataset]) -> Result<()> {
    fs::write(path, to_canonical_json(datasets)?)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Dataset>> {
    let text = crate::error::read_text(path)?;
    from_canonical_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::format(path, j.to_string()),
        other => other,
    })
}

/// Picks one split out of a loaded corpus file.
pub fn find_split(datasets: &[Dataset], split: Split) -> Option<&Dataset> {
    datasets.iter().find(|d| d.split == split)
}
