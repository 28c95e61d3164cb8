//! The 441-dimension linguistic feature vector computed per post.
//!
//! Layout, in order:
//!
//! | group          | offset | width |
//! |----------------|--------|-------|
//! | structural     | 0      | 51    |
//! | content        | 51     | 12    |
//! | conversational | 63     | 305   |
//! | affective      | 368    | 7     |
//! | emotion        | 375    | 16    |
//! | liwc           | 391    | 13    |
//! | speech_act     | 404    | 37    |
//!
//! Conversational features are computed on normalized text; all other
//! groups on the raw post text.

mod embedding;
mod extract;
mod lexicon;
pub mod pos;

use serde::{Deserialize, Serialize};

pub use embedding::{EmbeddingTable, EMBEDDING_DIM};
pub use extract::{
    embedding_vocabulary, embedding_words, extract_affective, extract_all, extract_content, extract_conversational,
    extract_emotion, extract_liwc, extract_speech_act, extract_structural, extract_thread, lexical_words,
};
pub use lexicon::{Lexicon, LexiconSet, LEXICON_FILES};

pub const FEATURE_DIM: usize = 441;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Structural,
    Content,
    Conversational,
    Affective,
    Emotion,
    Liwc,
    SpeechAct,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::Structural,
        FeatureGroup::Content,
        FeatureGroup::Conversational,
        FeatureGroup::Affective,
        FeatureGroup::Emotion,
        FeatureGroup::Liwc,
        FeatureGroup::SpeechAct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Structural => "structural",
            FeatureGroup::Content => "content",
            FeatureGroup::Conversational => "conversational",
            FeatureGroup::Affective => "affective",
            FeatureGroup::Emotion => "emotion",
            FeatureGroup::Liwc => "liwc",
            FeatureGroup::SpeechAct => "speech_act",
        }
    }

    pub fn width(self) -> usize {
        match self {
            FeatureGroup::Structural => 51,
            FeatureGroup::Content => 12,
            FeatureGroup::Conversational => 305,
            FeatureGroup::Affective => 7,
            FeatureGroup::Emotion => 16,
            FeatureGroup::Liwc => 13,
            FeatureGroup::SpeechAct => 37,
        }
    }

    pub fn offset(self) -> usize {
        Self::ALL.iter().take_while(|g| **g != self).map(|g| g.width()).sum()
    }

    pub fn range(self) -> std::ops::Range<usize> {
        self.offset()..self.offset() + self.width()
    }

    pub fn of_index(i: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.range().contains(&i))
    }
}

/// Indices inside the structural group.
pub mod structural_dims {
    pub const POS: std::ops::Range<usize> = 0..37;
    pub const HAS_EXCLAMATION: usize = 37;
    pub const HAS_NEGATION: usize = 38;
    pub const HAS_MEDIA: usize = 39;
    pub const HAS_URL: usize = 40;
    pub const HAS_PERIOD: usize = 41;
    pub const HAS_QUESTION: usize = 42;
    pub const HAS_HASHTAG: usize = 43;
    pub const CHAR_COUNT: usize = 44;
    pub const WORD_COUNT: usize = 45;
    pub const CAPITAL_RATIO: usize = 46;
    pub const IS_SOURCE: usize = 47;
    pub const N_EXCLAMATION: usize = 48;
    pub const N_QUESTION: usize = 49;
    pub const N_PERIOD: usize = 50;
}

/// Indices inside the content group. Count pairs are (post, source).
pub mod content_dims {
    pub const CUE: usize = 0;
    pub const SWEAR: usize = 1;
    pub const FALSE_SYNONYM: (usize, usize) = (2, 3);
    pub const FALSE_ANTONYM: (usize, usize) = (4, 5);
    pub const QUESTION_WORD: (usize, usize) = (6, 7);
    pub const RUMOR: (usize, usize) = (8, 9);
    pub const UNCERTAINTY: (usize, usize) = (10, 11);
}

/// Indices inside the conversational group.
pub mod conversational_dims {
    pub const EMBEDDING: std::ops::Range<usize> = 0..300;
    pub const SIM_SOURCE: usize = 300;
    pub const SIM_PREVIOUS: usize = 301;
    pub const SIM_OTHERS: usize = 302;
    pub const SIM_PARENT: usize = 303;
    pub const DEPTH: usize = 304;
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Bound {
    Free,
    NonNegative,
    Flag,
    Unit,
    Cosine,
}

fn bound_of(i: usize) -> Bound {
    use FeatureGroup::*;
    let g = FeatureGroup::of_index(i).expect("index below 441");
    let j = i - g.offset();
    match g {
        Structural => match j {
            0..=43 | 47 => Bound::Flag,
            46 => Bound::Unit,
            _ => Bound::NonNegative,
        },
        Content => match j {
            0 | 1 | 8..=11 => Bound::Flag,
            _ => Bound::NonNegative,
        },
        Conversational => match j {
            0..=299 => Bound::Free,
            300..=303 => Bound::Cosine,
            _ => Bound::Unit,
        },
        Affective => Bound::Free,
        Emotion | Liwc => Bound::Unit,
        SpeechAct => Bound::Flag,
    }
}

/// Feature vector of one post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_groups(groups: [Vec<f64>; 7]) -> Self {
        let mut values = Vec::with_capacity(FEATURE_DIM);
        for (g, part) in FeatureGroup::ALL.iter().zip(groups) {
            assert_eq!(part.len(), g.width(), "{} group width", g.name());
            values.extend(part);
        }
        Self { values }
    }

    pub fn group(&self, g: FeatureGroup) -> &[f64] {
        &self.values[g.range()]
    }

    /// Offsets of every group, in layout order.
    pub fn group_offsets() -> Vec<(&'static str, usize, usize)> {
        FeatureGroup::ALL.iter().map(|g| (g.name(), g.offset(), g.width())).collect()
    }

    /// Indices whose value falls outside the declared range of that
    /// sub-feature (flags in {0,1}, ratios and depth in [0,1], cosines in
    /// [-1,1], counts non-negative, everything finite).
    pub fn range_violations(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|&(i, &v)| {
                !v.is_finite()
                    || match bound_of(i) {
                        Bound::Free => false,
                        Bound::NonNegative => v < 0.0,
                        Bound::Flag => v != 0.0 && v != 1.0,
                        Bound::Unit => !(0.0..=1.0).contains(&v),
                        Bound::Cosine => !(-1.0..=1.0).contains(&v),
                    }
            })
            .map(|(i, _)| i)
            .collect()
    }
}
