//! Text normalization, tokenization and conversation assembly.
//!
//! A conversation becomes one token sequence in which every post is wrapped
//! as `[CLS] tokens… [SEP]`, posts in temporal order. Sentence-final `[EOS]`
//! markers produced by [`normalize`] stay inside the post span. Conversations
//! longer than the model's maximum length are cut into overlapping windows
//! that advance one post at a time.

mod normalize;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::corpus::ConversationThread;
use crate::error::{Error, Result};

pub use normalize::normalize;
pub use vocab::Vocabulary;

/// Reserved tokens. Their position in [`special::SPECIAL_TOKENS`] is their id.
pub mod special {
    pub const PAD: &str = "[PAD]";
    pub const UNK: &str = "[UNK]";
    pub const CLS: &str = "[CLS]";
    pub const SEP: &str = "[SEP]";
    pub const EOS: &str = "[EOS]";
    pub const URL: &str = "$URL$";
    pub const MENTION: &str = "$mention$";
    pub const DELETED: &str = "$deleted$";

    pub const SPECIAL_TOKENS: [&str; 8] = [PAD, UNK, CLS, SEP, EOS, URL, MENTION, DELETED];
}

use special::{CLS, SEP, SPECIAL_TOKENS};

/// Splits normalized text into special tokens, alphanumeric runs and single
/// punctuation characters. Whitespace is dropped.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for special in SPECIAL_TOKENS {
            if rest.starts_with(special) {
                out.push(&rest[..special.len()]);
                rest = &rest[special.len()..];
                continue 'outer;
            }
        }
        let end = if is_word_char(c) {
            rest.char_indices().find(|&(_, ch)| !is_word_char(ch)).map_or(rest.len(), |(i, _)| i)
        } else {
            c.len_utf8()
        };
        out.push(&rest[..end]);
        rest = &rest[end..];
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Maps normalized text to token ids. Words missing from the vocabulary
/// decompose into their characters; unknown characters become `[UNK]`.
pub fn tokenize(normalized: &str, vocab: &Vocabulary) -> Vec<u32> {
    let mut ids = Vec::new();
    for piece in pre_tokenize(normalized) {
        match vocab.id(piece) {
            Some(id) => ids.push(id),
            None => {
                let mut buf = [0u8; 4];
                for c in piece.chars() {
                    ids.push(vocab.id(c.encode_utf8(&mut buf)).unwrap_or_else(|| vocab.unk()));
                }
            }
        }
    }
    ids
}

/// A conversation (or a window of one) laid out as a single token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedThread {
    pub token_ids: Vec<u32>,
    /// Position of each post's `[CLS]`, ascending.
    pub cls_positions: Vec<usize>,
    /// Window-local post index of every token.
    pub post_index_of_token: Vec<usize>,
    pub attention_len: usize,
    /// Thread-level index of the first post in this sequence.
    pub first_post: usize,
}

impl TokenizedThread {
    pub fn n_posts(&self) -> usize {
        self.cls_positions.len()
    }

    /// Thread-level indices of the posts covered.
    pub fn post_range(&self) -> std::ops::Range<usize> {
        self.first_post..self.first_post + self.n_posts()
    }

    /// Token span `[start, end)` of each post.
    pub fn post_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.cls_positions.len());
        for (i, &start) in self.cls_positions.iter().enumerate() {
            let end = self.cls_positions.get(i + 1).copied().unwrap_or(self.token_ids.len());
            spans.push((start, end));
        }
        spans
    }

    /// Checks the layout invariants against the vocabulary's marker ids.
    pub fn check(&self, vocab: &Vocabulary) -> Result<()> {
        let cls = vocab.special(CLS);
        let sep = vocab.special(SEP);
        let n_cls = self.token_ids.iter().filter(|&&t| t == cls).count();
        if n_cls != self.cls_positions.len() {
            return Err(Error::Invalid(format!("{n_cls} [CLS] tokens for {} posts", self.cls_positions.len())));
        }
        if self.post_index_of_token.len() != self.token_ids.len() || self.attention_len != self.token_ids.len() {
            return Err(Error::Invalid("token-aligned fields disagree in length".into()));
        }
        for (i, (start, end)) in self.post_spans().into_iter().enumerate() {
            if self.token_ids[start] != cls || self.token_ids[end - 1] != sep {
                return Err(Error::Invalid(format!("post {i} is not bracketed by [CLS]/[SEP]")));
            }
            if self.post_index_of_token[start..end].iter().any(|&p| p != i) {
                return Err(Error::Invalid(format!("post {i} tokens are not contiguous")));
            }
        }
        Ok(())
    }
}

/// Token ids of one post's body (normalized, without the brackets).
pub fn post_body_ids(raw: &str, vocab: &Vocabulary) -> Vec<u32> {
    tokenize(&normalize(raw), vocab)
}

/// Lays out a whole thread as `[CLS] p1 [SEP] [CLS] p2 [SEP] …`.
pub fn assemble(thread: &ConversationThread, vocab: &Vocabulary) -> TokenizedThread {
    let cls = vocab.special(CLS);
    let sep = vocab.special(SEP);
    let mut tt = TokenizedThread {
        token_ids: Vec::new(),
        cls_positions: Vec::with_capacity(thread.len()),
        post_index_of_token: Vec::new(),
        attention_len: 0,
        first_post: 0,
    };
    for (i, post) in thread.posts.iter().enumerate() {
        tt.cls_positions.push(tt.token_ids.len());
        let body = post_body_ids(&post.raw_text, vocab);
        tt.token_ids.push(cls);
        tt.token_ids.extend(body);
        tt.token_ids.push(sep);
        tt.post_index_of_token.resize(tt.token_ids.len(), i);
    }
    tt.attention_len = tt.token_ids.len();
    tt
}

/// Cuts a tokenized thread into windows of at most `max_len` tokens without
/// splitting posts. The first window is the longest prefix that fits; each
/// following window adds the next post and drops posts from the source end
/// until it fits again.
pub fn window_split(tt: &TokenizedThread, max_len: usize) -> Result<Vec<TokenizedThread>> {
    let spans = tt.post_spans();
    if let Some((i, (s, e))) = spans.iter().enumerate().find(|(_, (s, e))| e - s > max_len) {
        return Err(Error::Config(format!("post {i} needs {} tokens but max_len is {max_len}", e - s)));
    }
    if tt.token_ids.len() <= max_len {
        return Ok(vec![tt.clone()]);
    }
    let n = spans.len();
    let len = |lo: usize, hi: usize| spans[hi - 1].1 - spans[lo].0;
    let mut windows = Vec::new();
    let mut lo = 0;
    let mut hi = 0;
    while hi < n && len(lo, hi + 1) <= max_len {
        hi += 1;
    }
    windows.push(slice_posts(tt, &spans, lo, hi));
    while hi < n {
        hi += 1;
        while len(lo, hi) > max_len {
            lo += 1;
        }
        windows.push(slice_posts(tt, &spans, lo, hi));
    }
    Ok(windows)
}

fn slice_posts(tt: &TokenizedThread, spans: &[(usize, usize)], lo: usize, hi: usize) -> TokenizedThread {
    let start = spans[lo].0;
    let end = spans[hi - 1].1;
    TokenizedThread {
        token_ids: tt.token_ids[start..end].to_vec(),
        cls_positions: spans[lo..hi].iter().map(|(s, _)| s - start).collect(),
        post_index_of_token: tt.post_index_of_token[start..end].iter().map(|p| p - lo).collect(),
        attention_len: end - start,
        first_post: tt.first_post + lo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture_corpus, Platform, Post};

    fn thread(texts: &[&str]) -> ConversationThread {
        ConversationThread {
            posts: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Post {
                    id: format!("p{i}"),
                    raw_text: t.to_string(),
                    author_meta: None,
                    parent_id: (i > 0).then(|| "p0".to_string()),
                    timestamp: i as i64,
                    platform: Platform::Twitter,
                })
                .collect(),
            stance_labels: None,
            veracity_label: None,
            veracity_confidence: None,
        }
    }

    fn fixture_vocab() -> Vocabulary {
        Vocabulary::build(["is it real ? [EOS]", "fake news . [EOS]", "$URL$ $mention$"], 1, 100)
    }

    #[test]
    fn pre_tokenize_keeps_specials() {
        assert_eq!(pre_tokenize("see $URL$ hi, $mention$ [EOS]"), ["see", "$URL$", "hi", ",", "$mention$", "[EOS]"]);
    }

    #[test]
    fn special_token_passthrough() {
        let v = fixture_vocab();
        assert_eq!(tokenize("$URL$", &v), vec![v.id("$URL$").unwrap()]);
    }

    #[test]
    fn tokenizer_golden_ids() {
        let v = fixture_vocab();
        // words in vocabulary map directly; "fax" falls back to characters
        // and 'x' is unseen, so it becomes [UNK]
        let ids = tokenize("is it fake? fax [EOS]", &v);
        let expected: Vec<u32> =
            ["is", "it", "fake", "?", "f", "a", "[UNK]", "[EOS]"].iter().map(|t| v.id(t).unwrap()).collect();
        assert_eq!(ids, expected);
        assert_eq!(tokenize("is it fake? fax [EOS]", &v), ids);
        assert!(ids.iter().all(|&i| (i as usize) < v.len()));
    }

    #[test]
    fn single_post_has_one_cls_and_sep() {
        let v = fixture_vocab();
        let tt = assemble(&thread(&["fake news."]), &v);
        let cls = v.special(CLS);
        let sep = v.special(SEP);
        assert_eq!(tt.token_ids.iter().filter(|&&t| t == cls).count(), 1);
        assert_eq!(tt.token_ids.iter().filter(|&&t| t == sep).count(), 1);
        tt.check(&v).unwrap();
    }

    #[test]
    fn two_post_golden_layout() {
        let v = fixture_vocab();
        let tt = assemble(&thread(&["fake news.", "is it real?"]), &v);
        let expected: Vec<u32> =
            ["[CLS]", "fake", "news", ".", "[EOS]", "[SEP]", "[CLS]", "is", "it", "real", "?", "[EOS]", "[SEP]"]
                .iter()
                .map(|t| v.id(t).unwrap())
                .collect();
        assert_eq!(tt.token_ids, expected);
        assert_eq!(tt.cls_positions, vec![0, 6]);
        assert_eq!(tt.post_index_of_token, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(tt.attention_len, 13);
    }

    #[test]
    fn five_posts_ascending_cls() {
        let v = fixture_vocab();
        let tt = assemble(&thread(&["a", "b c", "d", "e f g", "h"]), &v);
        assert_eq!(tt.cls_positions.len(), 5);
        assert!(tt.cls_positions.windows(2).all(|w| w[0] < w[1]));
        tt.check(&v).unwrap();
    }

    #[test]
    fn short_thread_is_one_window() {
        let v = fixture_vocab();
        let tt = assemble(&thread(&["fake news.", "is it real?"]), &v);
        let windows = window_split(&tt, 512).unwrap();
        assert_eq!(windows, vec![tt]);
    }

    #[test]
    fn six_equal_posts_slide_one_at_a_time() {
        let v = fixture_vocab();
        // every post is [CLS] real [EOS] [SEP] = 4 tokens; 16 tokens fit 4 posts
        let tt = assemble(&thread(&["real"; 6]), &v);
        assert_eq!(tt.token_ids.len(), 24);
        let windows = window_split(&tt, 16).unwrap();
        let ranges: Vec<_> = windows.iter().map(|w| w.post_range()).collect();
        assert_eq!(ranges, vec![0..4, 1..5, 2..6]);
        for w in &windows {
            w.check(&v).unwrap();
            assert!(w.token_ids.len() <= 16);
        }
    }

    #[test]
    fn oversized_post_is_config_error() {
        let v = fixture_vocab();
        let tt = assemble(&thread(&["is it real is it real"]), &v);
        assert!(matches!(window_split(&tt, 4), Err(Error::Config(_))));
    }

    #[test]
    fn windows_cover_every_post_on_fixtures() {
        let ds = make_fixture_corpus(5, 10, 9);
        let texts: Vec<String> =
            ds.threads.iter().flat_map(|t| t.posts.iter().map(|p| normalize(&p.raw_text))).collect();
        let v = Vocabulary::build(texts.iter().map(String::as_str), 1, 1000);
        for t in &ds.threads {
            let tt = assemble(t, &v);
            let longest = tt.post_spans().iter().map(|(s, e)| e - s).max().unwrap();
            let windows = window_split(&tt, longest.max(30)).unwrap();
            let mut covered = vec![false; t.len()];
            for w in &windows {
                w.check(&v).unwrap();
                for p in w.post_range() {
                    covered[p] = true;
                }
            }
            assert!(covered.into_iter().all(|c| c));
            assert!(windows.windows(2).all(|w| w[0].first_post <= w[1].first_post));
        }
    }
}
