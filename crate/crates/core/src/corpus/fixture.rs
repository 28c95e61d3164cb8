//! Deterministic synthetic corpora standing in for the licensed data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConversationThread, Dataset, Platform, Post, Split, Stance, Veracity};

const SUBJECTS: &[&str] =
    &["police", "officials", "the minister", "a gunman", "the president", "hostages", "the airline"];
const EVENTS: &[&str] =
    &["confirmed dead", "spotted downtown", "arrested", "injured", "resigned", "escaped", "missing"];
const PLACES: &[&str] = &["sydney", "paris", "ottawa", "ferguson", "berlin", "munich", "toronto"];

const SUPPORT: &[&str] = &[
    "confirmed",
    "this is true",
    "official statement agrees",
    "yes it happened",
    "verified by reporters",
    "can confirm",
];
const DENY: &[&str] =
    &["this is fake", "total hoax", "not true at all", "debunked already", "false report", "that is a lie"];
const QUERY: &[&str] =
    &["is this real?", "any source?", "why would they do that?", "where did you hear this?", "proof?", "really?"];
const COMMENT: &[&str] = &["wow", "so sad", "praying for everyone", "crazy times", "lol", "people are awful"];

fn phrases(stance: Stance) -> &'static [&'static str] {
    match stance {
        Stance::Support => SUPPORT,
        Stance::Deny => DENY,
        Stance::Query => QUERY,
        Stance::Comment => COMMENT,
    }
}

fn reply_stance(rng: &mut ChaCha8Rng, veracity: Veracity) -> Stance {
    // weights over (support, comment, deny, query)
    let weights = match veracity {
        Veracity::True => [0.4, 0.4, 0.1, 0.1],
        Veracity::False => [0.1, 0.3, 0.45, 0.15],
        Veracity::Unverified => [0.1, 0.35, 0.1, 0.45],
    };
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (s, w) in Stance::ALL.iter().zip(weights) {
        acc += w;
        if r < acc {
            return *s;
        }
    }
    Stance::Comment
}

fn reply_text(rng: &mut ChaCha8Rng, stance: Stance) -> String {
    let pool = phrases(stance);
    let mut parts: Vec<String> = Vec::new();
    if rng.gen_bool(0.3) {
        parts.push(format!("@user{}", rng.gen_range(1..50)));
    }
    let n = rng.gen_range(1..=2);
    for _ in 0..n {
        let mut p = pool.choose(rng).unwrap().to_string();
        if stance != Stance::Query {
            p.push(if rng.gen_bool(0.3) { '!' } else { '.' });
        }
        parts.push(p);
    }
    if rng.gen_bool(0.15) {
        parts.push(format!("http://t.co/{:x}", rng.gen::<u32>()));
    }
    let mut text = parts.join(" ");
    if rng.gen_bool(0.2) {
        // capitalize the first letter
        let mut chars = text.chars();
        if let Some(c) = chars.next() {
            text = c.to_uppercase().chain(chars).collect();
        }
    }
    text
}

fn source_text(rng: &mut ChaCha8Rng) -> String {
    let mut text = format!(
        "BREAKING: {} {} in {}, reports say.",
        SUBJECTS.choose(rng).unwrap(),
        EVENTS.choose(rng).unwrap(),
        PLACES.choose(rng).unwrap()
    );
    if rng.gen_bool(0.5) {
        text.push_str(" #breaking");
    }
    if rng.gen_bool(0.4) {
        text.push_str(&format!(" http://t.co/{:x}", rng.gen::<u32>()));
    }
    text
}

/// Builds a synthetic corpus. Output depends only on the arguments.
///
/// With `n_threads >= 3` the first three threads carry the three veracity
/// labels, and the first four posts overall carry the four stance labels
/// whenever the corpus has at least four posts.
///
/// # Panics
/// If `n_threads` or `max_posts` is zero.
pub fn make_fixture_corpus(seed: u64, n_threads: usize, max_posts: usize) -> Dataset {
    assert!(n_threads >= 1, "n_threads must be at least 1");
    assert!(max_posts >= 1, "max_posts must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let force = n_threads >= 3;
    let forced_stances = [Stance::Support, Stance::Deny, Stance::Query, Stance::Comment];
    let full_threads = 4usize.div_ceil(max_posts);
    let mut global_post = 0usize;

    let mut threads = Vec::with_capacity(n_threads);
    for t in 0..n_threads {
        let veracity = if force && t < 3 { Veracity::ALL[t] } else { Veracity::ALL[rng.gen_range(0..3)] };
        let n_posts = if force && t < full_threads { max_posts } else { rng.gen_range(1..=max_posts) };
        let platform = if rng.gen_bool(0.7) { Platform::Twitter } else { Platform::Reddit };
        let base_ts = 1_420_000_000 + (t as i64) * 10_000;

        let mut posts = Vec::with_capacity(n_posts);
        let mut labels = Vec::with_capacity(n_posts);
        let mut ts = base_ts;
        for p in 0..n_posts {
            let mut stance = if p == 0 { Stance::Support } else { reply_stance(&mut rng, veracity) };
            if force && global_post < forced_stances.len() {
                stance = forced_stances[global_post];
            }
            global_post += 1;
            let raw_text =
                if p == 0 && stance == Stance::Support { source_text(&mut rng) } else { reply_text(&mut rng, stance) };
            let parent_id = (p > 0).then(|| format!("fx{seed}-t{t}-p{}", rng.gen_range(0..p)));
            let mut meta = BTreeMap::new();
            meta.insert("user.screen_name".to_string(), format!("user{}", rng.gen_range(1..50)));
            posts.push(Post {
                id: format!("fx{seed}-t{t}-p{p}"),
                raw_text,
                author_meta: Some(meta),
                parent_id,
                timestamp: ts,
                platform,
            });
            labels.push(Some(stance));
            ts += rng.gen_range(1..120);
        }
        threads.push(ConversationThread {
            posts,
            stance_labels: Some(labels),
            veracity_label: Some(veracity),
            veracity_confidence: None,
        });
    }
    Dataset::new(Split::Train, threads)
}

/// A false rumor whose stances run query → comment → comment → comment → deny.
pub fn case_study_thread(id: &str) -> ConversationThread {
    let texts = [
        "is it true that the museum burned down last night?",
        "wow what a night",
        "crazy times in this city",
        "so sad if real",
        "this is fake, the museum is fine. debunked already!",
    ];
    let stances = [Stance::Query, Stance::Comment, Stance::Comment, Stance::Comment, Stance::Deny];
    let posts = texts
        .iter()
        .enumerate()
        .map(|(i, text)| Post {
            id: format!("{id}-{i}"),
            raw_text: text.to_string(),
            author_meta: None,
            parent_id: (i > 0).then(|| format!("{id}-{}", i - 1)),
            timestamp: 1_500_000_000 + i as i64 * 60,
            platform: Platform::Twitter,
        })
        .collect();
    ConversationThread {
        posts,
        stance_labels: Some(stances.iter().copied().map(Some).collect()),
        veracity_label: Some(Veracity::False),
        veracity_confidence: None,
    }
}
