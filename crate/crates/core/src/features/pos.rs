//! Deterministic rule-based tagger over the 36 Penn Treebank word tags plus
//! `X`. Closed-class words come from fixed lists; open-class words are
//! tagged from suffixes, capitalization and the previous tag.

use std::sync::LazyLock;

use regex::Regex;

/// Tag inventory in the order used by the presence vector (alphabetical).
pub const POS_TAGS: [&str; 37] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNP", "NNPS", "NNS", "PDT", "POS",
    "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB", "X",
];

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:https?://|www\.)\S+|[@#]\w+|\d+(?:[.,]\d+)*|\w+(?:'\w+)?|'s\b|[^\s\w]").unwrap()
});

const CC: &[&str] = &["and", "or", "but", "nor", "yet", "plus"];
const DT: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "every", "each", "some", "any", "no", "another", "either",
    "neither",
];
const IN: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "about", "into", "over", "after", "before", "under",
    "between", "through", "during", "without", "since", "because", "although", "while", "if", "than", "as", "like",
    "near", "against", "via", "per", "upon", "within", "across",
];
const MD: &[&str] = &["can", "could", "may", "might", "must", "shall", "should", "will", "would", "cannot"];
const PRP: &[&str] = &[
    "i",
    "you",
    "he",
    "she",
    "it",
    "we",
    "they",
    "me",
    "him",
    "us",
    "them",
    "myself",
    "yourself",
    "himself",
    "herself",
    "itself",
    "ourselves",
    "themselves",
];
const PRP_POSS: &[&str] = &["my", "your", "his", "its", "our", "their", "her"];
const RB: &[&str] = &[
    "not", "very", "really", "also", "just", "now", "then", "here", "ever", "never", "already", "still", "too", "soon",
    "again", "always", "often", "maybe", "perhaps", "so", "n't", "away", "even", "yet", "almost",
];
const RBR: &[&str] = &["more", "less", "further"];
const RBS: &[&str] = &["most", "least"];
const JJR: &[&str] = &[
    "better", "worse", "bigger", "smaller", "larger", "higher", "lower", "older", "younger", "faster", "greater",
    "harder", "easier",
];
const JJS: &[&str] = &["best", "worst"];
const JJ: &[&str] = &[
    "good",
    "bad",
    "true",
    "false",
    "fake",
    "real",
    "sad",
    "crazy",
    "awful",
    "official",
    "new",
    "old",
    "big",
    "small",
    "great",
    "dead",
    "fine",
    "happy",
    "total",
    "verified",
    "unconfirmed",
    "unknown",
    "breaking",
    "live",
    "many",
    "much",
    "few",
    "other",
    "same",
    "sure",
    "wrong",
    "right",
];
const PDT: &[&str] = &["all", "both", "half", "such"];
const RP_WORDS: &[&str] = &["up", "out", "off", "down"];
const UH: &[&str] =
    &["oh", "wow", "lol", "omg", "yes", "hey", "haha", "ok", "okay", "yeah", "ugh", "wtf", "please", "lmao", "hmm"];
const WDT: &[&str] = &["which", "whatever", "whichever"];
const WP: &[&str] = &["who", "what", "whom", "whoever"];
const WRB: &[&str] = &["where", "when", "why", "how", "whenever", "wherever"];
const FW: &[&str] = &["etc", "vs", "de", "la", "le", "el", "et", "al"];
const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred", "thousand", "million",
    "dozen",
];
const BE_PRESENT: &[(&str, &str)] = &[("am", "VBP"), ("are", "VBP"), ("is", "VBZ"), ("'m", "VBP"), ("'re", "VBP")];
const PAST_IRREGULAR: &[&str] = &[
    "was", "were", "did", "had", "said", "went", "got", "made", "knew", "thought", "took", "saw", "came", "told",
    "found", "gave", "left", "felt", "ran", "began", "heard", "lied", "died", "shot", "hit", "fled",
];
const PARTICIPLE_IRREGULAR: &[&str] =
    &["been", "done", "gone", "seen", "taken", "given", "known", "shown", "written", "spoken", "broken"];
const BASE_VERBS: &[&str] = &[
    "be", "do", "have", "say", "go", "get", "make", "know", "think", "take", "see", "come", "want", "look", "use",
    "find", "give", "tell", "work", "call", "try", "ask", "need", "feel", "become", "leave", "put", "mean", "keep",
    "let", "begin", "seem", "help", "talk", "turn", "start", "show", "hear", "play", "run", "move", "like", "live",
    "believe", "happen", "confirm", "deny", "report", "claim", "pray", "hope", "wait", "stop", "read", "check",
    "share", "post", "die", "kill", "love", "hate", "agree", "promise", "demand", "warn", "lie", "stay", "follow",
    "watch", "wish",
];
const HAVE_BE: &[&str] =
    &["have", "has", "had", "having", "be", "been", "being", "is", "are", "was", "were", "'ve", "get", "got"];

fn is_in(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

fn verb_stem_of_s(w: &str) -> Option<&str> {
    let stem = w.strip_suffix("es").filter(|s| is_in(BASE_VERBS, s)).or_else(|| w.strip_suffix('s'))?;
    is_in(BASE_VERBS, stem).then_some(stem)
}

/// Tags a raw post and returns one tag per token.
pub fn tag(text: &str) -> Vec<(String, &'static str)> {
    let tokens: Vec<&str> = TOKEN_RE.find_iter(text).map(|m| m.as_str()).collect();
    let mut out: Vec<(String, &'static str)> = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let lower = tok.to_lowercase();
        let prev = out.last().map(|(_, t)| *t);
        let prev_word = out.last().map(|(w, _)| w.to_lowercase());
        let next = tokens.get(i + 1).map(|t| t.to_lowercase());
        let sentence_start = prev.is_none() || out.last().is_some_and(|(w, _)| matches!(w.as_str(), "." | "!" | "?"));
        let t = tag_one(tok, &lower, prev, prev_word.as_deref(), next.as_deref(), sentence_start);
        if let Some(t) = t {
            out.push((tok.to_string(), t));
        } else {
            // punctuation carries no word tag but still marks boundaries
            out.push((tok.to_string(), ""));
        }
    }
    out.retain(|(_, t)| !t.is_empty());
    out
}

fn tag_one(
    tok: &str,
    w: &str,
    prev: Option<&str>,
    prev_word: Option<&str>,
    next: Option<&str>,
    sentence_start: bool,
) -> Option<&'static str> {
    let first = tok.chars().next()?;
    if w.starts_with("http") || w.starts_with("www.") {
        return Some("X");
    }
    if tok.starts_with('@') && tok.len() > 1 {
        return Some("NNP");
    }
    if tok.starts_with('#') && tok.len() > 1 {
        return Some("NN");
    }
    if !first.is_alphanumeric() && first != '\'' {
        return match first {
            '#' | '$' | '%' | '&' | '+' | '=' | '<' | '>' | '*' | '~' | '^' | '|' | '@' => Some("SYM"),
            c if !c.is_ascii() && !c.is_alphanumeric() => Some("X"),
            _ => None,
        };
    }
    if tok.chars().any(|c| c.is_alphabetic() && !c.is_ascii()) {
        return Some("X");
    }
    if first.is_ascii_digit() {
        // "1)" or "2." at the start of a post is a list marker
        if sentence_start && tok.len() == 1 && matches!(next, Some(")") | Some(".")) && prev.is_none() {
            return Some("LS");
        }
        return Some("CD");
    }
    if w == "'s" {
        return Some(if matches!(prev, Some("NN" | "NNS" | "NNP" | "NNPS")) { "POS" } else { "VBZ" });
    }
    if w == "to" {
        return Some("TO");
    }
    if w == "there" {
        return Some(if matches!(next, Some("is" | "are" | "was" | "were" | "'s")) { "EX" } else { "RB" });
    }
    if w == "whose" {
        return Some("WP$");
    }
    if w == "that" && matches!(prev, Some("NN" | "NNS")) {
        return Some("WDT");
    }
    if is_in(PDT, w) && matches!(next, Some(n) if is_in(DT, n) || is_in(PRP_POSS, n)) {
        return Some("PDT");
    }
    if is_in(RP_WORDS, w) && matches!(prev, Some(p) if p.starts_with("VB")) {
        return Some("RP");
    }
    for (list, t) in [
        (CC, "CC"),
        (DT, "DT"),
        (MD, "MD"),
        (PRP, "PRP"),
        (PRP_POSS, "PRP$"),
        (WDT, "WDT"),
        (WP, "WP"),
        (WRB, "WRB"),
        (UH, "UH"),
        (FW, "FW"),
        (RBR, "RBR"),
        (RBS, "RBS"),
        (JJR, "JJR"),
        (JJS, "JJS"),
        (IN, "IN"),
        (RB, "RB"),
        (NUMBER_WORDS, "CD"),
        (RP_WORDS, "IN"),
        (PDT, "DT"),
    ] {
        if is_in(list, w) {
            return Some(t);
        }
    }
    if let Some(&(_, t)) = BE_PRESENT.iter().find(|(b, _)| *b == w) {
        return Some(t);
    }
    if is_in(PARTICIPLE_IRREGULAR, w) {
        return Some("VBN");
    }
    if is_in(PAST_IRREGULAR, w) {
        return Some("VBD");
    }
    if is_in(JJ, w) {
        return Some("JJ");
    }
    let after_aux = matches!(prev_word, Some(p) if is_in(HAVE_BE, p));
    if is_in(BASE_VERBS, w) {
        return Some(match prev {
            Some("TO" | "MD") => "VB",
            Some("PRP") if !matches!(prev_word, Some("he" | "she" | "it")) => "VBP",
            Some("NN" | "NNS" | "NNP" | "NNPS") => "VBP",
            _ => "VB",
        });
    }
    if verb_stem_of_s(w).is_some() {
        return Some("VBZ");
    }
    if w.len() > 4 && w.ends_with("ing") {
        return Some("VBG");
    }
    if w.len() > 3 && w.ends_with("ed") {
        return Some(if after_aux { "VBN" } else { "VBD" });
    }
    if w.len() > 3 && w.ends_with("ly") {
        return Some("RB");
    }
    if w.len() > 5 && w.ends_with("est") {
        return Some("JJS");
    }
    if w.len() > 4
        && (w.ends_with("ous")
            || w.ends_with("ful")
            || w.ends_with("ive")
            || w.ends_with("able")
            || w.ends_with("ible")
            || w.ends_with("al")
            || w.ends_with("less"))
    {
        return Some("JJ");
    }
    let capitalized = first.is_uppercase();
    let plural = w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is");
    if capitalized && !sentence_start {
        return Some(if plural { "NNPS" } else { "NNP" });
    }
    Some(if plural { "NNS" } else { "NN" })
}

/// Presence flag per tag in [`POS_TAGS`] order.
pub fn tag_presence(text: &str) -> [f64; 37] {
    let mut flags = [0.0; 37];
    for (_, t) in tag(text) {
        let i = POS_TAGS.binary_search(&t).expect("tag in inventory");
        flags[i] = 1.0;
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(text: &str) -> Vec<&'static str> {
        tag(text).into_iter().map(|(_, t)| t).collect()
    }

    #[test]
    fn inventory_is_sorted_and_complete() {
        let mut sorted = POS_TAGS;
        sorted.sort();
        assert_eq!(sorted, POS_TAGS);
        assert_eq!(POS_TAGS.len(), 37);
    }

    #[test]
    fn golden_sentence() {
        assert_eq!(
            tags("Police have confirmed that the gunman was shot in Sydney!"),
            ["NN", "VBP", "VBN", "DT", "DT", "NN", "VBD", "VBD", "IN", "NNP"]
        );
        assert_eq!(
            tags("is this real? i think you should ask @bob"),
            ["VBZ", "DT", "JJ", "PRP", "VBP", "PRP", "MD", "VB", "NNP"]
        );
    }

    #[test]
    fn golden_presence_vector() {
        let flags = tag_presence("There are 2 reporters running to the scene, wow #breaking");
        let present: Vec<&str> = POS_TAGS.iter().zip(flags).filter(|(_, f)| *f == 1.0).map(|(t, _)| *t).collect();
        assert_eq!(present, ["CD", "DT", "EX", "NN", "NNS", "TO", "UH", "VBG", "VBP"]);
    }

    #[test]
    fn non_ascii_is_x() {
        assert_eq!(tags("café ✓"), ["X", "X"]);
    }

    #[test]
    fn punctuation_only_has_no_tags() {
        assert!(tags("?").is_empty());
    }
}
