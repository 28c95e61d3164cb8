//! Loader for the RumorEval 2019 directory layout.
//!
//! Each thread lives in its own directory holding `source-tweet/<id>.json`,
//! `replies/<id>.json` and usually a `structure.json` reply tree. Label keys
//! are JSON files with `subtaskaenglish` (post id → stance) and
//! `subtaskbenglish` (thread id → veracity) maps; the key file name decides
//! the split (`train`, `dev`, or `test`/`eval`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::Serialize;
use serde_json::Value;
use walkdir::WalkDir;

use super::{ConversationThread, Dataset, Platform, Post, Split, Stance, Veracity, DELETED_TEXT};
use crate::error::{Error, Result};

/// Result of ingesting a RumorEval directory.
#[derive(Debug)]
pub struct Ingest {
    pub datasets: BTreeMap<Split, Dataset>,
    pub report: IngestReport,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct IngestReport {
    pub threads_loaded: usize,
    pub threads_skipped: usize,
    pub timestamps_repaired: usize,
    pub unlabeled_posts: usize,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Keys {
    stance: HashMap<String, (Stance, Split)>,
    veracity: HashMap<String, (Veracity, Split)>,
}

pub fn load_rumoreval(root: &Path) -> Result<Ingest> {
    if !root.is_dir() {
        return Err(Error::Ingest(format!("{} is not a directory", root.display())));
    }
    let mut report = IngestReport::default();
    let keys = read_keys(root)?;

    let mut thread_dirs: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_dir() && e.path().join("source-tweet").is_dir())
        .map(|e| e.into_path())
        .collect();
    thread_dirs.sort();
    if thread_dirs.is_empty() {
        return Err(Error::Ingest(format!("no thread directories found under {}", root.display())));
    }

    // ids from skipped threads must not trip the unknown-label check
    let mut skipped_ids: HashSet<String> = HashSet::new();
    let mut loaded: Vec<(PathBuf, ConversationThread)> = Vec::new();
    for dir in &thread_dirs {
        match load_thread(dir, &mut report) {
            Ok(thread) => loaded.push((dir.clone(), thread)),
            Err(msg) => {
                // keep the report free of machine-specific path prefixes
                let prefix = format!("{}{}", root.display(), std::path::MAIN_SEPARATOR);
                let msg = format!("skipping {}: {msg}", dir.display()).replace(&prefix, "");
                warn!("{msg}");
                report.warnings.push(msg);
                report.threads_skipped += 1;
                skipped_ids.extend(post_ids_on_disk(dir));
            }
        }
    }

    let known: HashSet<&str> = loaded.iter().flat_map(|(_, t)| t.posts.iter().map(|p| p.id.as_str())).collect();
    for id in keys.stance.keys().chain(keys.veracity.keys()) {
        if !known.contains(id.as_str()) && !skipped_ids.contains(id) {
            return Err(Error::Ingest(format!("label key references unknown post id {id}")));
        }
    }

    let mut datasets: BTreeMap<Split, Dataset> = BTreeMap::new();
    for (dir, mut thread) in loaded {
        let mut split = None;
        let labels: Vec<Option<Stance>> = thread
            .posts
            .iter()
            .map(|p| {
                keys.stance.get(&p.id).map(|&(s, sp)| {
                    split.get_or_insert(sp);
                    s
                })
            })
            .collect();
        report.unlabeled_posts += labels.iter().filter(|l| l.is_none()).count();
        if labels.iter().any(Option::is_some) {
            thread.stance_labels = Some(labels);
        }
        if let Some(&(v, sp)) = keys.veracity.get(thread.id()) {
            thread.veracity_label = Some(v);
            split = Some(sp);
        }
        let split = split.unwrap_or_else(|| split_from_path(&dir));
        datasets.entry(split).or_insert_with(|| Dataset::new(split, Vec::new())).threads.push(thread);
        report.threads_loaded += 1;
    }
    for ds in datasets.values() {
        ds.validate().map_err(|e| Error::Ingest(e.to_string()))?;
    }
    Ok(Ingest { datasets, report })
}

fn split_from_path(path: &Path) -> Split {
    let s = path.to_string_lossy().to_ascii_lowercase();
    if s.contains("test") {
        Split::Test
    } else if s.contains("dev") {
        Split::Dev
    } else {
        Split::Train
    }
}

fn split_from_key_name(name: &str) -> Split {
    let name = name.to_ascii_lowercase();
    if name.contains("dev") {
        Split::Dev
    } else if name.contains("test") || name.contains("eval") {
        Split::Test
    } else {
        Split::Train
    }
}

fn read_keys(root: &Path) -> Result<Keys> {
    let mut keys = Keys::default();
    let candidates = WalkDir::new(root).sort_by_file_name().into_iter().filter_map(|e| e.ok()).filter(|e| {
        e.file_type().is_file()
            && e.path().extension().is_some_and(|x| x == "json")
            && e.file_name().to_string_lossy().to_ascii_lowercase().contains("key")
    });
    for entry in candidates {
        let text = fs::read_to_string(entry.path())?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Ingest(format!("malformed key file {}: {e}", entry.path().display())))?;
        let split = split_from_key_name(&entry.file_name().to_string_lossy());
        if let Some(map) = value.get("subtaskaenglish").and_then(Value::as_object) {
            for (id, label) in map {
                let label = label.as_str().unwrap_or_default().parse::<Stance>()?;
                keys.stance.insert(id.clone(), (label, split));
            }
        }
        if let Some(map) = value.get("subtaskbenglish").and_then(Value::as_object) {
            for (id, label) in map {
                let label = label.as_str().unwrap_or_default().parse::<Veracity>()?;
                keys.veracity.insert(id.clone(), (label, split));
            }
        }
    }
    Ok(keys)
}

fn post_ids_on_disk(dir: &Path) -> Vec<String> {
    ["source-tweet", "replies"]
        .iter()
        .filter_map(|sub| fs::read_dir(dir.join(sub)).ok())
        .flatten()
        .filter_map(|e| e.ok())
        .filter_map(|e| e.path().file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect()
}

struct RawPost {
    post: Post,
    declared_parent: Option<String>,
}

fn load_thread(dir: &Path, report: &mut IngestReport) -> std::result::Result<ConversationThread, String> {
    let source_files = json_files(&dir.join("source-tweet"))?;
    let Some(source_file) = source_files.first() else {
        return Err("no source post".into());
    };
    let source = parse_post_file(source_file)?;
    let mut replies = Vec::new();
    let reply_dir = dir.join("replies");
    if reply_dir.is_dir() {
        for file in json_files(&reply_dir)? {
            replies.push(parse_post_file(&file)?);
        }
    }

    let structure_parents = match fs::read_to_string(dir.join("structure.json")) {
        Ok(text) => {
            let value: Value = serde_json::from_str(&text).map_err(|e| format!("structure.json: {e}"))?;
            let mut parents = HashMap::new();
            collect_structure(&value, None, &mut parents);
            parents
        }
        Err(_) => HashMap::new(),
    };

    let source_id = source.post.id.clone();
    let mut posts: Vec<Post> = vec![source.post];
    let mut seen: HashSet<String> = HashSet::from([source_id.clone()]);
    for raw in replies {
        if !seen.insert(raw.post.id.clone()) {
            continue;
        }
        let mut post = raw.post;
        let parent = structure_parents
            .get(&post.id)
            .cloned()
            .flatten()
            .or(raw.declared_parent)
            .unwrap_or_else(|| source_id.clone());
        post.parent_id = Some(parent);
        posts.push(post);
    }

    order_posts(&mut posts, &source_id, report);
    Ok(ConversationThread { posts, stance_labels: None, veracity_label: None, veracity_confidence: None })
}

/// Puts the source first, repairs reply timestamps that precede their
/// parent, and orders replies by (timestamp, depth, id). Depth only breaks
/// ties created by clamping, so a clamped reply stays after its parent.
fn order_posts(posts: &mut Vec<Post>, source_id: &str, report: &mut IngestReport) {
    let ids: HashSet<String> = posts.iter().map(|p| p.id.clone()).collect();
    for post in posts.iter_mut().skip(1) {
        let dangling = post.parent_id.as_deref().is_none_or(|p| !ids.contains(p) || p == post.id);
        if dangling {
            post.parent_id = Some(source_id.to_string());
        }
    }

    let mut children: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, post) in posts.iter().enumerate().skip(1) {
        children.entry(post.parent_id.clone().unwrap()).or_default().push(i);
    }
    // breadth-first from the source; posts unreachable because of a cycle
    // get reattached to the source
    let mut depth = vec![usize::MAX; posts.len()];
    depth[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let parent_ts = posts[i].timestamp;
        if let Some(kids) = children.get(&posts[i].id).cloned() {
            for k in kids {
                if depth[k] != usize::MAX {
                    continue;
                }
                depth[k] = depth[i] + 1;
                if posts[k].timestamp < parent_ts {
                    posts[k].timestamp = parent_ts;
                    report.timestamps_repaired += 1;
                }
                queue.push_back(k);
            }
        }
    }
    let source_ts = posts[0].timestamp;
    for i in 1..posts.len() {
        if depth[i] == usize::MAX {
            posts[i].parent_id = Some(source_id.to_string());
            depth[i] = 1;
            posts[i].timestamp = posts[i].timestamp.max(source_ts);
        }
    }

    let source = posts.remove(0);
    let source_depth = depth.remove(0);
    debug_assert_eq!(source_depth, 0);
    let mut order: Vec<usize> = (0..posts.len()).collect();
    order.sort_by(|&a, &b| {
        (posts[a].timestamp, depth[a], &posts[a].id).cmp(&(posts[b].timestamp, depth[b], &posts[b].id))
    });
    let mut taken: Vec<Option<Post>> = std::mem::take(posts).into_iter().map(Some).collect();
    posts.push(source);
    posts.extend(order.into_iter().map(|i| taken[i].take().unwrap()));
}

fn collect_structure(value: &Value, parent: Option<&str>, out: &mut HashMap<String, Option<String>>) {
    if let Value::Object(map) = value {
        for (id, children) in map {
            out.entry(id.clone()).or_insert_with(|| parent.map(str::to_string));
            collect_structure(children, Some(id), out);
        }
    }
}

fn json_files(dir: &Path) -> std::result::Result<Vec<PathBuf>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn parse_post_file(path: &Path) -> std::result::Result<RawPost, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let fallback_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_post(&value, &fallback_id).map_err(|e| format!("{}: {e}", path.display()))
}

/// Unwraps reddit listing envelopes down to the post object.
fn post_object(value: &Value) -> &Value {
    let mut v = value;
    loop {
        if let Some(child) = v.pointer("/data/children/0/data") {
            v = child;
        } else if let Some(data) = v.get("data").filter(|d| d.is_object()) {
            v = data;
        } else {
            return v;
        }
    }
}

fn str_field(v: &Value, key: &str) -> Option<String> {
    match v.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_post(value: &Value, fallback_id: &str) -> std::result::Result<RawPost, String> {
    if !value.is_object() {
        return Err("post is not a JSON object".into());
    }
    let obj = post_object(value);
    let is_twitter = obj.get("id_str").is_some() || obj.get("user").is_some() || obj.get("created_at").is_some();
    let id = str_field(obj, "id_str").or_else(|| str_field(obj, "id")).unwrap_or_else(|| fallback_id.to_string());
    let mut meta = BTreeMap::new();

    if is_twitter {
        let text = str_field(obj, "full_text").or_else(|| str_field(obj, "text")).unwrap_or_default();
        let timestamp = obj
            .get("created_at")
            .and_then(Value::as_str)
            .and_then(|s| chrono::DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y").ok())
            .map(|d| d.timestamp())
            .ok_or("missing or unparseable created_at")?;
        if let Some(user) = obj.get("user") {
            for key in ["screen_name", "verified", "followers_count", "friends_count"] {
                if let Some(v) = str_field(user, key).or_else(|| user.get(key).map(Value::to_string)) {
                    meta.insert(format!("user.{key}"), v);
                }
            }
        }
        for key in ["retweet_count", "favorite_count"] {
            if let Some(v) = obj.get(key) {
                meta.insert(key.to_string(), v.to_string());
            }
        }
        if obj.pointer("/entities/media").is_some() || obj.pointer("/extended_entities/media").is_some() {
            meta.insert("has_media".into(), "true".into());
        }
        Ok(RawPost {
            post: Post {
                id,
                raw_text: body_or_deleted(text),
                author_meta: Some(meta),
                parent_id: None,
                timestamp,
                platform: Platform::Twitter,
            },
            declared_parent: str_field(obj, "in_reply_to_status_id_str"),
        })
    } else {
        let text = match str_field(obj, "body") {
            Some(body) => body,
            None => {
                let title = str_field(obj, "title").unwrap_or_default();
                let selftext = str_field(obj, "selftext").unwrap_or_default();
                if selftext.is_empty() {
                    title
                } else {
                    format!("{title}\n{selftext}")
                }
            }
        };
        let timestamp = obj
            .get("created_utc")
            .or_else(|| obj.get("created"))
            .and_then(Value::as_f64)
            .map(|t| t as i64)
            .unwrap_or(0);
        for key in ["author", "subreddit", "score"] {
            if let Some(v) = str_field(obj, key) {
                meta.insert(key.to_string(), v);
            }
        }
        if obj.get("post_hint").is_some() || obj.get("media").is_some_and(|m| !m.is_null()) {
            meta.insert("has_media".into(), "true".into());
        }
        let declared_parent =
            str_field(obj, "parent_id").map(|p| p.split_once('_').map_or(p.clone(), |(_, id)| id.to_string()));
        Ok(RawPost {
            post: Post {
                id,
                raw_text: body_or_deleted(text),
                author_meta: Some(meta),
                parent_id: None,
                timestamp,
                platform: Platform::Reddit,
            },
            declared_parent,
        })
    }
}

fn body_or_deleted(text: String) -> String {
    let t = text.trim();
    if t.is_empty() || t == "[deleted]" || t == "[removed]" {
        DELETED_TEXT.to_string()
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(path: &Path, value: &Value) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, serde_json::to_string(value).unwrap()).unwrap();
    }

    fn tweet(id: &str, text: &str, reply_to: Option<&str>, when: &str) -> Value {
        json!({
            "id_str": id,
            "text": text,
            "created_at": when,
            "in_reply_to_status_id_str": reply_to,
            "user": {"screen_name": "u", "verified": false}
        })
    }

    fn layout(root: &Path) {
        let t = root.join("twitter-english/event/100");
        write(
            &t.join("source-tweet/100.json"),
            &tweet("100", "Breaking news http://t.co/x", None, "Wed Jan 07 11:11:33 +0000 2015"),
        );
        write(
            &t.join("replies/101.json"),
            &tweet("101", "@a is this true?", Some("100"), "Wed Jan 07 11:12:00 +0000 2015"),
        );
        // clock skew: reply earlier than its parent
        write(&t.join("replies/102.json"), &tweet("102", "fake", Some("101"), "Wed Jan 07 11:11:50 +0000 2015"));
        write(&t.join("structure.json"), &json!({"100": {"101": {"102": []}}}));

        let r = root.join("reddit-training-data/abc");
        write(
            &r.join("source-tweet/abc.json"),
            &json!({"kind": "Listing", "data": {"children": [{"kind": "t3", "data": {"id": "abc", "title": "Claim", "selftext": "", "created": 1000.0, "author": "x"}}]}}),
        );
        write(
            &r.join("replies/def.json"),
            &json!({"kind": "t1", "data": {"id": "def", "body": "[deleted]", "created": 1001.0, "parent_id": "t3_abc"}}),
        );
        write(&r.join("structure.json"), &json!({"abc": {"def": []}}));

        write(
            &root.join("train-key.json"),
            &json!({"subtaskaenglish": {"100": "support", "101": "query", "abc": "support"}, "subtaskbenglish": {"100": "false"}}),
        );
        write(
            &root.join("dev-key.json"),
            &json!({"subtaskaenglish": {"def": "comment"}, "subtaskbenglish": {"abc": "true"}}),
        );
    }

    #[test]
    fn loads_twitter_and_reddit_threads() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path());
        let ingest = load_rumoreval(dir.path()).unwrap();
        assert_eq!(ingest.report.threads_loaded, 2);
        assert_eq!(ingest.report.timestamps_repaired, 1);

        let train = &ingest.datasets[&Split::Train];
        assert_eq!(train.threads.len(), 1);
        let t = &train.threads[0];
        assert_eq!(t.posts.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["100", "101", "102"]);
        assert_eq!(t.posts[2].timestamp, t.posts[1].timestamp);
        assert_eq!(t.stance_labels.as_ref().unwrap(), &vec![Some(Stance::Support), Some(Stance::Query), None]);
        assert_eq!(t.veracity_label, Some(Veracity::False));
        t.validate().unwrap();

        let dev = &ingest.datasets[&Split::Dev];
        let r = &dev.threads[0];
        assert_eq!(r.posts[0].platform, Platform::Reddit);
        assert_eq!(r.posts[1].raw_text, DELETED_TEXT);
        assert_eq!(r.veracity_label, Some(Veracity::True));
    }

    #[test]
    fn empty_directory_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_rumoreval(dir.path()), Err(Error::Ingest(_))));
        assert!(load_rumoreval(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn malformed_post_skips_thread() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path());
        fs::write(dir.path().join("reddit-training-data/abc/replies/def.json"), "{not json").unwrap();
        let ingest = load_rumoreval(dir.path()).unwrap();
        assert_eq!(ingest.report.threads_skipped, 1);
        assert_eq!(ingest.report.threads_loaded, 1);
        assert_eq!(ingest.report.warnings.len(), 1);
        let w = &ingest.report.warnings[0];
        assert!(w.starts_with("skipping reddit-training-data/abc"), "{w}");
        assert!(!w.contains(&dir.path().display().to_string()), "{w}");
    }

    #[test]
    fn unknown_label_id_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path());
        write(&dir.path().join("test-key.json"), &json!({"subtaskaenglish": {"999": "deny"}}));
        assert!(matches!(load_rumoreval(dir.path()), Err(Error::Ingest(_))));
    }
}
