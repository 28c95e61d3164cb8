//! Lexicon files and the bundled open fixtures.
//!
//! Every lexicon is a TSV file `word<TAB>v1<TAB>…<TAB>vk`. The first line
//! declares the arity as `#arity<TAB>k`; an optional `#columns<TAB>…` line
//! names the value columns, and other `#` lines are comments. Word lists
//! have arity 0. Words are lower-cased at load.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub name: String,
    pub arity: usize,
    pub columns: Vec<String>,
    entries: HashMap<String, Vec<f64>>,
}

impl Lexicon {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let arity = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#arity\t")
                .and_then(|a| a.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Invalid(format!("lexicon {name}: first line must be '#arity<TAB>k'")))?,
            None => return Err(Error::Invalid(format!("lexicon {name} is empty"))),
        };
        let mut columns = Vec::new();
        let mut entries = HashMap::new();
        for (lineno, line) in lines {
            if let Some(cols) = line.strip_prefix("#columns\t") {
                columns = cols.split('\t').map(str::to_string).collect();
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or_default().trim().to_lowercase();
            let values = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("lexicon {name} line {}: {e}", lineno + 1)))?;
            if values.len() != arity {
                return Err(Error::Invalid(format!(
                    "lexicon {name} line {}: expected {arity} values, found {}",
                    lineno + 1,
                    values.len()
                )));
            }
            entries.insert(word, values);
        }
        if !columns.is_empty() && columns.len() != arity {
            return Err(Error::Invalid(format!("lexicon {name}: {} column names for arity {arity}", columns.len())));
        }
        Ok(Self { name: name.to_string(), arity, columns, entries })
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lexicon file stems and the arity each must declare.
pub const LEXICON_FILES: [(&str, usize); 14] = [
    ("anew", 3),
    ("dal", 3),
    ("afinn", 1),
    ("emolex", 10),
    ("emosenticnet", 6),
    ("liwc", 13),
    ("speech_act", 37),
    ("cue", 0),
    ("swear", 0),
    ("rumor", 0),
    ("uncertainty", 0),
    ("false_synonym", 0),
    ("false_antonym", 0),
    ("question", 0),
];

const FIXTURES: [(&str, &str); 14] = [
    ("anew", include_str!("../../data/lexicons/anew.tsv")),
    ("dal", include_str!("../../data/lexicons/dal.tsv")),
    ("afinn", include_str!("../../data/lexicons/afinn.tsv")),
    ("emolex", include_str!("../../data/lexicons/emolex.tsv")),
    ("emosenticnet", include_str!("../../data/lexicons/emosenticnet.tsv")),
    ("liwc", include_str!("../../data/lexicons/liwc.tsv")),
    ("speech_act", include_str!("../../data/lexicons/speech_act.tsv")),
    ("cue", include_str!("../../data/lexicons/cue.tsv")),
    ("swear", include_str!("../../data/lexicons/swear.tsv")),
    ("rumor", include_str!("../../data/lexicons/rumor.tsv")),
    ("uncertainty", include_str!("../../data/lexicons/uncertainty.tsv")),
    ("false_synonym", include_str!("../../data/lexicons/false_synonym.tsv")),
    ("false_antonym", include_str!("../../data/lexicons/false_antonym.tsv")),
    ("question", include_str!("../../data/lexicons/question.tsv")),
];

/// All lexicons the feature extractors consult.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconSet {
    /// valence, arousal, dominance
    pub affective_norms: Lexicon,
    /// pleasantness, activation, imagery
    pub dictionary_of_affect: Lexicon,
    pub valence: Lexicon,
    pub emotion10: Lexicon,
    pub emotion6: Lexicon,
    pub liwc: Lexicon,
    pub speech_act: Lexicon,
    pub cue: Lexicon,
    pub swear: Lexicon,
    pub rumor: Lexicon,
    pub uncertainty: Lexicon,
    pub false_synonym: Lexicon,
    pub false_antonym: Lexicon,
    pub question: Lexicon,
}

impl LexiconSet {
    fn from_map(mut map: HashMap<&'static str, Lexicon>) -> Result<Self> {
        for (name, arity) in LEXICON_FILES {
            let lex = map.get(name).ok_or_else(|| Error::Config(format!("missing lexicon '{name}'")))?;
            if lex.arity != arity {
                return Err(Error::Config(format!("lexicon '{name}' has arity {} (expected {arity})", lex.arity)));
            }
        }
        let mut take = |name: &str| map.remove(name).unwrap();
        Ok(Self {
            affective_norms: take("anew"),
            dictionary_of_affect: take("dal"),
            valence: take("afinn"),
            emotion10: take("emolex"),
            emotion6: take("emosenticnet"),
            liwc: take("liwc"),
            speech_act: take("speech_act"),
            cue: take("cue"),
            swear: take("swear"),
            rumor: take("rumor"),
            uncertainty: take("uncertainty"),
            false_synonym: take("false_synonym"),
            false_antonym: take("false_antonym"),
            question: take("question"),
        })
    }

    /// Loads `<name>.tsv` for every lexicon from `dir`. A missing or
    /// malformed file is a configuration error.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        for (name, _) in LEXICON_FILES {
            let path = dir.join(format!("{name}.tsv"));
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read lexicon {}: {e}", path.display())))?;
            let lex = Lexicon::parse(name, &text).map_err(|e| Error::Config(e.to_string()))?;
            map.insert(name, lex);
        }
        Self::from_map(map)
    }

    /// The small open lexicons bundled with the crate.
    pub fn fixture() -> Self {
        let map = FIXTURES
            .iter()
            .map(|&(name, text)| (name, Lexicon::parse(name, text).expect("bundled lexicon parses")))
            .collect();
        Self::from_map(map).expect("bundled lexicons are complete")
    }

    /// Writes the bundled lexicons into `dir` as TSV files.
    pub fn write_fixture_dir(dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in FIXTURES {
            fs::write(dir.join(format!("{name}.tsv")), text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_arities() {
        let lex = LexiconSet::fixture();
        assert_eq!(lex.speech_act.arity, 37);
        assert_eq!(lex.speech_act.columns.len(), 37);
        assert_eq!(lex.liwc.arity, 13);
        assert_eq!(lex.emotion10.arity, 10);
        assert_eq!(lex.valence.get("good"), Some(&[3.0][..]));
        assert!(lex.rumor.contains("hoax"));
    }

    #[test]
    fn words_are_lowercased() {
        let lex = Lexicon::parse("x", "#arity\t1\nGood\t2\n").unwrap();
        assert_eq!(lex.get("good"), Some(&[2.0][..]));
    }

    #[test]
    fn wrong_arity_rejected() {
        assert!(Lexicon::parse("x", "#arity\t2\nword\t1\n").is_err());
        assert!(Lexicon::parse("x", "word\t1\n").is_err());
    }

    #[test]
    fn missing_file_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        LexiconSet::write_fixture_dir(dir.path()).unwrap();
        assert!(LexiconSet::load_dir(dir.path()).is_ok());
        fs::remove_file(dir.path().join("liwc.tsv")).unwrap();
        assert!(matches!(LexiconSet::load_dir(dir.path()), Err(Error::Config(_))));
    }
}
