use std::sync::LazyLock;

use regex::Regex;

use super::embedding::{EmbeddingTable, EMBEDDING_DIM};
use super::lexicon::{Lexicon, LexiconSet};
use super::{pos, FeatureGroup, FeatureVector};
use crate::corpus::{ConversationThread, Post};
use crate::preprocess::{normalize, pre_tokenize, special::SPECIAL_TOKENS};

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+(?:'\w+)?").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
static MEDIA_FILE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)pic\.twitter\.com|\.(?:jpe?g|png|gif|mp4)\b").unwrap());

const NEGATIONS: &[&str] =
    &["not", "no", "never", "nothing", "nobody", "none", "neither", "nor", "nowhere", "cannot", "without"];
const MEDIA_WORDS: &[&str] =
    &["pic", "pics", "picture", "pictures", "photo", "photos", "image", "images", "video", "videos", "footage"];

/// Lower-cased words of a raw post with URLs removed.
pub fn lexical_words(raw: &str) -> Vec<String> {
    let stripped = URL_RE.replace_all(raw, " ");
    WORD_RE.find_iter(&stripped).map(|m| m.as_str().to_lowercase()).collect()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn count_in(words: &[String], lex: &Lexicon) -> f64 {
    words.iter().filter(|w| lex.contains(w)).count() as f64
}

fn any_in(words: &[String], lex: &Lexicon) -> f64 {
    flag(words.iter().any(|w| lex.contains(w)))
}

/// Sums lexicon value columns over the words of a post.
fn column_sums(words: &[String], lex: &Lexicon) -> (Vec<f64>, usize) {
    let mut sums = vec![0.0; lex.arity];
    let mut hits = 0;
    for v in words.iter().filter_map(|w| lex.get(w)) {
        hits += 1;
        for (s, x) in sums.iter_mut().zip(v) {
            *s += x;
        }
    }
    (sums, hits)
}

/// Structural features of one raw post (51 values).
pub fn extract_structural(post: &Post, is_source: bool) -> Vec<f64> {
    let raw = post.raw_text.as_str();
    let no_url = URL_RE.replace_all(raw, " ");
    let words = lexical_words(raw);
    let n_excl = no_url.matches('!').count() as f64;
    let n_quest = no_url.matches('?').count() as f64;
    let n_period = no_url.matches('.').count() as f64;
    let n_chars = raw.chars().count();
    let n_upper = raw.chars().filter(|c| c.is_uppercase()).count();

    let mut out = Vec::with_capacity(51);
    out.extend(pos::tag_presence(raw));
    out.push(flag(n_excl > 0.0));
    out.push(flag(words.iter().any(|w| NEGATIONS.contains(&w.as_str()) || w.ends_with("n't"))));
    out.push(flag(
        post.meta("has_media") == Some("true")
            || MEDIA_FILE_RE.is_match(raw)
            || words.iter().any(|w| MEDIA_WORDS.contains(&w.as_str())),
    ));
    out.push(flag(URL_RE.is_match(raw) || raw.contains(crate::preprocess::special::URL)));
    out.push(flag(n_period > 0.0));
    out.push(flag(n_quest > 0.0));
    out.push(flag(HASHTAG_RE.is_match(raw)));
    out.push(n_chars as f64);
    out.push(raw.split_whitespace().count() as f64);
    out.push(if n_chars == 0 { 0.0 } else { n_upper as f64 / n_chars as f64 });
    out.push(flag(is_source));
    out.push(n_excl);
    out.push(n_quest);
    out.push(n_period);
    out
}

/// Content features (12 values): cue and swear presence, then
/// (post, source) pairs for false-synonym, false-antonym and question-word
/// counts and for rumor and uncertainty presence.
pub fn extract_content(post: &Post, source: &Post, lex: &LexiconSet) -> Vec<f64> {
    let w = lexical_words(&post.raw_text);
    let s = lexical_words(&source.raw_text);
    vec![
        any_in(&w, &lex.cue),
        any_in(&w, &lex.swear),
        count_in(&w, &lex.false_synonym),
        count_in(&s, &lex.false_synonym),
        count_in(&w, &lex.false_antonym),
        count_in(&s, &lex.false_antonym),
        count_in(&w, &lex.question),
        count_in(&s, &lex.question),
        any_in(&w, &lex.rumor),
        any_in(&s, &lex.rumor),
        any_in(&w, &lex.uncertainty),
        any_in(&s, &lex.uncertainty),
    ]
}

/// Affective features (7 values): mean dictionary-of-affect scores, mean
/// affective-norm scores and the summed valence score. Means over words
/// found in the lexicon; 0 when none is found.
pub fn extract_affective(post: &Post, lex: &LexiconSet) -> Vec<f64> {
    let words = lexical_words(&post.raw_text);
    let mean = |l: &Lexicon| {
        let (sums, hits) = column_sums(&words, l);
        sums.into_iter().map(move |s| if hits == 0 { 0.0 } else { s / hits as f64 })
    };
    let mut out: Vec<f64> = mean(&lex.dictionary_of_affect).collect();
    out.extend(mean(&lex.affective_norms));
    out.push(column_sums(&words, &lex.valence).0[0]);
    out
}

fn normalized_counts(words: &[String], lex: &Lexicon) -> Vec<f64> {
    let (sums, _) = column_sums(words, lex);
    let n = words.len();
    sums.into_iter().map(|s| if n == 0 { 0.0 } else { (s / n as f64).clamp(0.0, 1.0) }).collect()
}

/// Emotion features (16 values): ten emotion/polarity rates followed by
/// six basic-emotion rates, each as hits per word.
pub fn extract_emotion(post: &Post, lex: &LexiconSet) -> Vec<f64> {
    let words = lexical_words(&post.raw_text);
    let mut out = normalized_counts(&words, &lex.emotion10);
    out.extend(normalized_counts(&words, &lex.emotion6));
    out
}

/// LIWC category rates (13 values), hits per word.
pub fn extract_liwc(post: &Post, lex: &LexiconSet) -> Vec<f64> {
    normalized_counts(&lexical_words(&post.raw_text), &lex.liwc)
}

/// Speech-act category presence (37 values).
pub fn extract_speech_act(post: &Post, lex: &LexiconSet) -> Vec<f64> {
    let (sums, _) = column_sums(&lexical_words(&post.raw_text), &lex.speech_act);
    sums.into_iter().map(|s| flag(s > 0.0)).collect()
}

/// Lowercased words of the normalized text, without special tokens or
/// punctuation. These are the words looked up in the embedding table.
pub fn embedding_words(raw: &str) -> Vec<String> {
    let norm = normalize(raw);
    pre_tokenize(&norm)
        .into_iter()
        .filter(|t| !SPECIAL_TOKENS.contains(t) && t.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_'))
        .map(str::to_lowercase)
        .collect()
}

/// Every distinct embedding word of a corpus, sorted.
pub fn embedding_vocabulary<'a>(
    datasets: impl IntoIterator<Item = &'a crate::corpus::Dataset>,
) -> std::collections::BTreeSet<String> {
    datasets
        .into_iter()
        .flat_map(|d| &d.threads)
        .flat_map(|t| &t.posts)
        .flat_map(|p| embedding_words(&p.raw_text))
        .collect()
}

/// Running sum of word vectors and the number of words that had one.
#[derive(Clone)]
struct VecSum {
    sum: Vec<f64>,
    n: usize,
}

impl VecSum {
    fn of(words: &[String], emb: &EmbeddingTable) -> Self {
        let mut sum = vec![0.0; EMBEDDING_DIM];
        let mut n = 0;
        for v in words.iter().filter_map(|w| emb.get(w)) {
            n += 1;
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        Self { sum, n }
    }

    fn mean(&self) -> Vec<f64> {
        if self.n == 0 {
            return vec![0.0; EMBEDDING_DIM];
        }
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn conversational_from(post_idx: usize, thread: &ConversationThread, sums: &[VecSum], depths: &[usize]) -> Vec<f64> {
    let mine = sums[post_idx].mean();
    let source = sums[0].mean();
    let parent_idx =
        thread.posts[post_idx].parent_id.as_deref().and_then(|pid| thread.posts.iter().position(|p| p.id == pid));
    let prev_idx = post_idx.checked_sub(1);

    // the other posts: everything except this one, the source and the
    // previous post
    let mut others = VecSum { sum: vec![0.0; EMBEDDING_DIM], n: 0 };
    for (j, s) in sums.iter().enumerate() {
        if j == post_idx || j == 0 || Some(j) == prev_idx {
            continue;
        }
        others.n += s.n;
        for (o, x) in others.sum.iter_mut().zip(&s.sum) {
            *o += x;
        }
    }

    let max_depth = depths.iter().copied().max().unwrap_or(0).max(1);
    let mut out = mine.clone();
    out.push(cosine(&mine, &source));
    out.push(prev_idx.map_or(0.0, |p| cosine(&mine, &sums[p].mean())));
    out.push(cosine(&mine, &others.mean()));
    out.push(parent_idx.map_or(0.0, |p| cosine(&mine, &sums[p].mean())));
    out.push(depths[post_idx] as f64 / max_depth as f64);
    out
}

/// Conversational features of post `post_idx` (305 values): the mean
/// embedding of its words, cosine similarity with the source, the previous
/// post, the remaining posts and the parent, and depth over the thread's
/// maximum depth.
pub fn extract_conversational(post_idx: usize, thread: &ConversationThread, emb: &EmbeddingTable) -> Vec<f64> {
    let sums: Vec<VecSum> = thread.posts.iter().map(|p| VecSum::of(&embedding_words(&p.raw_text), emb)).collect();
    conversational_from(post_idx, thread, &sums, &thread.depths())
}

fn assemble(post_idx: usize, thread: &ConversationThread, lex: &LexiconSet, conversational: Vec<f64>) -> FeatureVector {
    let post = &thread.posts[post_idx];
    FeatureVector::from_groups([
        extract_structural(post, post_idx == 0),
        extract_content(post, thread.source(), lex),
        conversational,
        extract_affective(post, lex),
        extract_emotion(post, lex),
        extract_liwc(post, lex),
        extract_speech_act(post, lex),
    ])
}

/// The full 441-dimension vector of one post.
pub fn extract_all(
    post_idx: usize,
    thread: &ConversationThread,
    lex: &LexiconSet,
    emb: &EmbeddingTable,
) -> FeatureVector {
    assemble(post_idx, thread, lex, extract_conversational(post_idx, thread, emb))
}

/// Feature vectors of every post of a thread, in post order. Word vectors
/// are summed once per post.
pub fn extract_thread(thread: &ConversationThread, lex: &LexiconSet, emb: &EmbeddingTable) -> Vec<FeatureVector> {
    let sums: Vec<VecSum> = thread.posts.iter().map(|p| VecSum::of(&embedding_words(&p.raw_text), emb)).collect();
    let depths = thread.depths();
    (0..thread.len())
        .map(|i| {
            let fv = assemble(i, thread, lex, conversational_from(i, thread, &sums, &depths));
            debug_assert_eq!(fv.group(FeatureGroup::Conversational).len(), 305);
            fv
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Platform;
    use crate::features::{content_dims as cd, conversational_dims as vd, structural_dims as sd, FEATURE_DIM};

    fn post(id: &str, parent: Option<&str>, text: &str) -> Post {
        Post {
            id: id.into(),
            raw_text: text.into(),
            author_meta: None,
            parent_id: parent.map(str::to_string),
            timestamp: 0,
            platform: Platform::Twitter,
        }
    }

    fn thread(posts: Vec<Post>) -> ConversationThread {
        ConversationThread { posts, stance_labels: None, veracity_label: None, veracity_confidence: None }
    }

    #[test]
    fn structural_hand_computed() {
        let p = post("a", Some("s"), "Is it FAKE?! No way... http://t.co/x #hoax");
        let f = extract_structural(&p, false);
        assert_eq!(f[sd::HAS_EXCLAMATION], 1.0);
        assert_eq!(f[sd::HAS_NEGATION], 1.0);
        assert_eq!(f[sd::HAS_MEDIA], 0.0);
        assert_eq!(f[sd::HAS_URL], 1.0);
        assert_eq!(f[sd::HAS_PERIOD], 1.0);
        assert_eq!(f[sd::HAS_QUESTION], 1.0);
        assert_eq!(f[sd::HAS_HASHTAG], 1.0);
        // 42 characters, 7 whitespace tokens, capitals I F A K E N
        assert_eq!(f[sd::CHAR_COUNT], 42.0);
        assert_eq!(f[sd::WORD_COUNT], 7.0);
        assert!((f[sd::CAPITAL_RATIO] - 6.0 / 42.0).abs() < 1e-12);
        assert_eq!(f[sd::IS_SOURCE], 0.0);
        assert_eq!(f[sd::N_EXCLAMATION], 1.0);
        assert_eq!(f[sd::N_QUESTION], 1.0);
        // the URL's dots are not counted
        assert_eq!(f[sd::N_PERIOD], 3.0);
    }

    #[test]
    fn content_uses_post_and_source() {
        let lex = LexiconSet::fixture();
        let src = post("s", None, "Is this a hoax? Why would they lie");
        let p = post("a", Some("s"), "Damn, reportedly fake and false, maybe");
        let f = extract_content(&p, &src, &lex);
        assert_eq!(f[cd::CUE], 1.0);
        assert_eq!(f[cd::SWEAR], 1.0);
        assert_eq!((f[cd::FALSE_SYNONYM.0], f[cd::FALSE_SYNONYM.1]), (2.0, 2.0));
        assert_eq!((f[cd::FALSE_ANTONYM.0], f[cd::FALSE_ANTONYM.1]), (0.0, 0.0));
        assert_eq!((f[cd::QUESTION_WORD.0], f[cd::QUESTION_WORD.1]), (0.0, 1.0));
        assert_eq!((f[cd::RUMOR.0], f[cd::RUMOR.1]), (1.0, 1.0));
        assert_eq!((f[cd::UNCERTAINTY.0], f[cd::UNCERTAINTY.1]), (1.0, 0.0));
    }

    #[test]
    fn affective_means_and_sum() {
        let lex = LexiconSet::fixture();
        let f = extract_affective(&post("a", None, "good good sad, unknownword"), &lex);
        let dal_good = lex.dictionary_of_affect.get("good").unwrap().to_vec();
        let dal_sad = lex.dictionary_of_affect.get("sad").unwrap().to_vec();
        for k in 0..3 {
            assert!((f[k] - (2.0 * dal_good[k] + dal_sad[k]) / 3.0).abs() < 1e-12);
        }
        let afinn = 2.0 * lex.valence.get("good").unwrap()[0] + lex.valence.get("sad").unwrap()[0];
        assert_eq!(f[6], afinn);
        let none = extract_affective(&post("b", None, "zzz"), &lex);
        assert_eq!(none, vec![0.0; 7]);
    }

    #[test]
    fn emotion_rates_per_word() {
        let lex = LexiconSet::fixture();
        // four words, one of which ("sad") carries sadness and negative
        let f = extract_emotion(&post("a", None, "so very sad today"), &lex);
        let cols = &lex.emotion10.columns;
        let sadness = cols.iter().position(|c| c == "sadness").unwrap();
        let negative = cols.iter().position(|c| c == "negative").unwrap();
        assert_eq!(f[sadness], 0.25);
        assert_eq!(f[negative], 0.25);
        assert_eq!(f[10 + 4], 0.25);
        assert_eq!(f.iter().filter(|&&v| v != 0.0).count(), 3);
    }

    #[test]
    fn conversational_similarities() {
        let emb = EmbeddingTable::synthetic(["alpha", "beta", "gamma"]);
        let t = thread(vec![
            post("s", None, "alpha beta"),
            post("r1", Some("s"), "alpha beta"),
            post("r2", Some("r1"), "gamma"),
            post("r3", Some("s"), "nothing known"),
        ]);
        let f1 = extract_conversational(1, &t, &emb);
        assert!((f1[vd::SIM_SOURCE] - 1.0).abs() < 1e-12);
        assert!((f1[vd::SIM_PREVIOUS] - 1.0).abs() < 1e-12);
        assert!((f1[vd::SIM_PARENT] - 1.0).abs() < 1e-12);
        // others are r2 and r3, whose only known word is gamma
        let g = emb.get("gamma").unwrap();
        assert!((f1[vd::SIM_OTHERS] - cosine(&f1[vd::EMBEDDING], g)).abs() < 1e-12);
        assert_eq!(f1[vd::DEPTH], 0.5);

        let f3 = extract_conversational(3, &t, &emb);
        assert_eq!(&f3[vd::EMBEDDING], &[0.0; 300][..]);
        assert_eq!(f3[vd::SIM_SOURCE], 0.0);
        assert_eq!(f3[vd::DEPTH], 0.5);

        let f0 = extract_conversational(0, &t, &emb);
        assert!((f0[vd::SIM_SOURCE] - 1.0).abs() < 1e-12);
        assert_eq!(f0[vd::SIM_PREVIOUS], 0.0);
        assert_eq!(f0[vd::SIM_PARENT], 0.0);
        assert_eq!(f0[vd::DEPTH], 0.0);
    }

    #[test]
    fn thread_matches_per_post() {
        let lex = LexiconSet::fixture();
        let emb = EmbeddingTable::synthetic(["alpha", "beta", "fake"]);
        let t = thread(vec![
            post("s", None, "BREAKING: alpha fake!"),
            post("r1", Some("s"), "beta? really"),
            post("r2", Some("r1"), "@bob alpha http://x.co"),
        ]);
        let all = extract_thread(&t, &lex, &emb);
        for (i, fv) in all.iter().enumerate() {
            assert_eq!(fv.values.len(), FEATURE_DIM);
            assert_eq!(fv, &extract_all(i, &t, &lex, &emb));
            assert!(fv.range_violations().is_empty());
        }
    }
}
