use std::sync::LazyLock;

use regex::Regex;

use super::special::{DELETED, EOS, MENTION, URL};

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^\w$])@\w+").unwrap());

/// Replaces URLs and @-mentions with placeholder tokens, splits the text
/// into sentences and terminates each sentence with `[EOS]`.
///
/// Sentence boundaries are newlines, existing `[EOS]` markers, and runs of
/// `.`, `!` or `?` followed by whitespace or the end of the text. Casing is
/// preserved. Empty input becomes `$deleted$ [EOS]`. The function is
/// idempotent.
pub fn normalize(raw: &str) -> String {
    let text = URL_RE.replace_all(raw, regex::NoExpand(URL));
    let text = MENTION_RE.replace_all(&text, |caps: &regex::Captures<'_>| format!("{}{MENTION}", &caps[1]));

    let mut sentences: Vec<String> = Vec::new();
    for segment in text.split(EOS) {
        for line in segment.split('\n') {
            split_sentences(line, &mut sentences);
        }
    }
    if sentences.is_empty() {
        return format!("{DELETED} {EOS}");
    }
    let mut out = String::new();
    for s in sentences {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s);
        out.push(' ');
        out.push_str(EOS);
    }
    out
}

fn split_sentences(line: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = line.chars().collect();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            // absorb the whole punctuation run
            while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?') {
                i += 1;
                current.push(chars[i]);
            }
            if i + 1 == chars.len() || chars[i + 1].is_whitespace() {
                push_collapsed(&current, out);
                current.clear();
            }
        }
        i += 1;
    }
    push_collapsed(&current, out);
}

fn push_collapsed(s: &str, out: &mut Vec<String>) {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if !collapsed.is_empty() {
        out.push(collapsed);
    }
}
