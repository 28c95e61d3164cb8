use std::path::{Component, Path, PathBuf};

/// `corpus.json` → `corpus.vocab`.
pub fn vocab_path(data: &Path) -> PathBuf {
    data.with_extension("vocab")
}

/// `corpus.json` → `corpus.report.json`.
pub fn report_path(data: &Path) -> PathBuf {
    data.with_extension("report.json")
}

/// `target` expressed relative to directory `base`. Both are made absolute
/// against the working directory first; the result never is.
pub fn relative_to(base: &Path, target: &Path) -> std::io::Result<PathBuf> {
    let cwd = std::env::current_dir()?;
    let abs = |p: &Path| -> Vec<String> {
        let joined = cwd.join(p);
        let mut parts: Vec<String> = Vec::new();
        for c in joined.components() {
            match c {
                Component::ParentDir => {
                    parts.pop();
                }
                Component::Normal(s) => parts.push(s.to_string_lossy().into_owned()),
                _ => {}
            }
        }
        parts
    };
    let (b, t) = (abs(base), abs(target));
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for part in &t[common..] {
        out.push(part);
    }
    Ok(out)
}

/// Directory holding `file`, or `.` for a bare file name.
pub fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
